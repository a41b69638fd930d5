// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "gradcheck.hpp"
#include "srgan/checkpoint.hpp"
#include "srgan/data/toy.hpp"
#include "srgan/eval.hpp"
#include "srgan/mds.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
namespace data = srgan::data;
namespace nd = srgan::nd;
namespace mds = srgan::mds;
using nd::Graph;
using nd::Tensor;
using testing_util::check_gradients;
using testing_util::random_tensor;
using testing_util::TempDir;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename P>
std::vector<Tensor<double>*> tensors_of(P& p) {
  std::vector<Tensor<double>*> out;
  p.for_each_tensor("", [&](const std::string&, Tensor<double>& t) { out.push_back(&t); });
  return out;
}

// Desk-scale training: the schedule of the full method (SRN 2000 iterations,
// GAN 3000 outer iterations, batch 256) with narrow hidden layers so that a
// laptop core finishes a seed in about a minute.
srgan::TrainConfig desk_config(std::uint64_t seed) {
  srgan::TrainConfig c;
  c.m = 256;
  c.srn_iters = 2000;
  c.gan_iters = 3000;
  c.d_z = 16;
  c.gen_hidden = 32;
  c.disc_hidden = 32;
  c.enc_hidden = 32;
  c.post_hidden = 32;
  c.seed = seed;
  return c;
}

struct Toy {
  data::ToyInfo info;
  data::Dataset norm;
};

Toy make_toy(const data::ToyConfig& cfg) {
  TempDir dir;
  Toy t{data::gen_toy(cfg, dir.path()), {}};
  t.norm = data::normalize(t.info.dataset, t.info.split).dataset;
  return t;
}

double zsl_t1(const Toy& toy, const srgan::TrainConfig& cfg) {
  auto b = srgan::init_bundle<double>(toy.norm, toy.info.split, cfg);
  srgan::train(b, toy.norm, toy.info.split);
  srgan::EvalConfig ec;
  ec.seed = cfg.seed;
  return *srgan::run_zsl(b, toy.norm, toy.info.split, ec).T1;
}

void criterion1() {
  const double a = srgan::harmonic(41.46, 83.08), b = srgan::harmonic(31.29, 60.87);
  report(1, std::abs(a - 55.31) <= 0.01 && std::abs(b - 41.34) <= 0.01,
         fmt("H(41.46, 83.08) = %.4f, H(31.29, 60.87) = %.4f", a, b));
}

void criterion2() {
  srgan::NetworkShape s;
  s.d_v = 5;
  s.d_s = 3;
  s.d_z = 2;
  s.head_classes = 3;
  s.gen_hidden = 6;
  s.disc_hidden = 7;
  s.enc_hidden = 4;
  s.post_hidden = 8;
  const Eigen::Index B = 4;
  const std::vector<int> labels{0, 2, 1, 2};
  using Check = std::function<double(std::mt19937_64&)>;
  const std::vector<std::pair<const char*, Check>> checks = {
      {"rectifying", [&](std::mt19937_64& rng) {
         auto R = srgan::make_srn<double>(s.d_s, 8, rng);
         const Tensor<double> piv = random_tensor(B, s.d_v, rng);
         const Tensor<double> sem = random_tensor(B, s.d_s, rng, 0, 1);
         return check_gradients(tensors_of(R.net), [&](Graph<double>& g) {
                  return srgan::srn_loss(g, R, piv, sem).total;
                }).rel_error;
       }},
      {"generator", [&](std::mt19937_64& rng) {
         auto G = srgan::make_generator<double>(s, rng);
         auto D = srgan::make_discriminator<double>(s, rng);
         const Tensor<double> sem = random_tensor(B, s.d_s, rng, 0, 1), rec = random_tensor(B, s.d_s, rng, 0, 1);
         const Tensor<double> z = random_tensor(B, s.d_z, rng), zp = random_tensor(4, s.d_z, rng);
         const Tensor<double> piv = random_tensor(2, s.d_v, rng, -0.5, 0.5);
         return check_gradients(tensors_of(G.net), [&](Graph<double>& g) {
                  auto fake = srgan::generate(G, g.constant(sem), g.constant(rec), g.constant(z));
                  return nd::add(srgan::loss_g_adv_cls(D, fake, labels).total,
                                 srgan::loss_vp(g, G, piv, Tensor<double>(sem.topRows(2)), Tensor<double>(rec.topRows(2)), zp));
                }).rel_error;
       }},
      {"pivot", [&](std::mt19937_64& rng) {
         auto G = srgan::make_generator<double>(s, rng);
         const Tensor<double> piv = random_tensor(2, s.d_v, rng, -0.5, 0.5);
         const Tensor<double> sem = random_tensor(2, s.d_s, rng, 0, 1);
         const Tensor<double> z = random_tensor(4, s.d_z, rng);
         return check_gradients(tensors_of(G.net), [&](Graph<double>& g) {
                  return srgan::loss_vp(g, G, piv, sem, sem, z);
                }).rel_error;
       }},
      {"critic", [&](std::mt19937_64& rng) {
         auto D = srgan::make_discriminator<double>(s, rng);
         const Tensor<double> real = random_tensor(B, s.d_v, rng), fake = random_tensor(B, s.d_v, rng);
         std::uniform_real_distribution<double> u(0, 1);
         const std::vector<double> eps{u(rng), u(rng), u(rng), u(rng)};
         return check_gradients(tensors_of(D), [&](Graph<double>& g) {
                  return srgan::loss_d<double>(g, D, real, fake, labels, eps, 10.0).total;
                }).rel_error;
       }},
      {"pre-reconstruction", [&](std::mt19937_64& rng) {
         auto G = srgan::make_generator<double>(s, rng);
         auto E = srgan::make_encoder<double>(s, rng);
         const Tensor<double> v = random_tensor(B, s.d_v, rng, -0.9, 0.9);
         const Tensor<double> sem = random_tensor(B, s.d_s, rng, 0, 1);
         auto wrt = tensors_of(E.net);
         for (auto* t : tensors_of(G.net)) wrt.push_back(t);
         return check_gradients(wrt, [&](Graph<double>& g) { return srgan::loss_pre(g, E, G, v, sem, sem); }).rel_error;
       }},
      {"post-reconstruction", [&](std::mt19937_64& rng) {
         auto G = srgan::make_generator<double>(s, rng);
         auto F = srgan::make_post<double>(s, rng);
         const Tensor<double> sem = random_tensor(B, s.d_s, rng, 0, 1), rec = random_tensor(B, s.d_s, rng, 0, 1);
         const Tensor<double> z = random_tensor(B, s.d_z, rng);
         auto wrt = tensors_of(F.net);
         for (auto* t : tensors_of(G.net)) wrt.push_back(t);
         return check_gradients(wrt, [&](Graph<double>& g) { return srgan::loss_post(g, F, G, sem, rec, z); }).rel_error;
       }},
      {"generator total", [&](std::mt19937_64& rng) {
         auto G = srgan::make_generator<double>(s, rng);
         auto D = srgan::make_discriminator<double>(s, rng);
         auto E = srgan::make_encoder<double>(s, rng);
         auto F = srgan::make_post<double>(s, rng);
         const Tensor<double> v = random_tensor(B, s.d_v, rng, -0.9, 0.9);
         const Tensor<double> sem = random_tensor(B, s.d_s, rng, 0, 1), rec = random_tensor(B, s.d_s, rng, 0, 1);
         const Tensor<double> z = random_tensor(B, s.d_z, rng), zp = random_tensor(4, s.d_z, rng);
         const Tensor<double> piv = random_tensor(2, s.d_v, rng, -0.5, 0.5);
         auto wrt = tensors_of(G.net);
         for (auto* t : tensors_of(E.net)) wrt.push_back(t);
         for (auto* t : tensors_of(F.net)) wrt.push_back(t);
         return check_gradients(wrt, [&](Graph<double>& g) {
                  auto fake = srgan::generate(G, g.constant(sem), g.constant(rec), g.constant(z));
                  return srgan::loss_g_total(srgan::loss_g_adv_cls(D, fake, labels).total,
                                             srgan::loss_vp(g, G, piv, Tensor<double>(sem.topRows(2)), Tensor<double>(rec.topRows(2)), zp),
                                             srgan::loss_pre(g, E, G, v, sem, rec),
                                             srgan::loss_post(g, F, G, sem, rec, z));
                }).rel_error;
       }},
  };
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    double worst = 0;
    for (unsigned seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(1000 * (k + 1) + seed);
      worst = std::max(worst, checks[k].second(rng));
    }
    ok = ok && worst < 1e-3;
    detail += std::string(checks[k].first) + fmt(" %.1e; ", worst);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(2, ok && secs < 60, "worst relative error over 10 seeds: " + detail + fmt("%.1fs", secs));
}

void criterion3() {
  // Linear critic along e1 through an identity trunk: gradient norm is exactly 1.
  srgan::DiscParams<double> D;
  D.trunk.layers.push_back({Tensor<double>::Identity(3, 3), Tensor<double>::Zero(1, 3), nd::Activation::leaky_relu});
  Tensor<double> w = Tensor<double>::Zero(1, 3);
  w(0, 0) = 1;
  D.critic = {w, Tensor<double>::Zero(1, 1), nd::Activation::linear};
  D.classifier = {Tensor<double>::Zero(2, 3), Tensor<double>::Zero(1, 2), nd::Activation::linear};
  std::mt19937_64 rng(3);
  const Tensor<double> real = random_tensor(4, 3, rng, 0.1, 1), fake = random_tensor(4, 3, rng, 0.1, 1);
  const std::vector<int> labels{0, 1, 0, 1};
  const std::vector<double> eps{0.1, 0.4, 0.7, 0.9};
  Graph<double> g;
  const double gp = srgan::loss_d<double>(g, D, real, fake, labels, eps, 10.0).penalty.value()(0, 0);

  const Tensor<double> sem = random_tensor(5, 4, rng, 0, 1);
  Graph<double> g2;
  auto s = g2.constant(sem);
  const double eq2 = srgan::srn_loss_from(s, s, nd::cosine_matrix_values(sem)).total.value()(0, 0);

  const Tensor<double> piv = random_tensor(3, 6, rng);
  Graph<double> g3;
  const double eq4 = srgan::vp_loss_from(g3.constant(srgan::repeat_rows(piv, 5)), piv, 5).value()(0, 0);
  report(3, gp == 0 && eq2 < 1e-12 && eq4 < 1e-12,
         fmt("penalty %.3g, rectifying loss %.3g, pivot loss %.3g", gp, eq2, eq4));
}

void criterion4() {
  Toy toy = make_toy({});
  data::Dataset& ds = toy.norm;
  data::Matrix means = data::Matrix::Zero(ds.num_classes(), ds.visual_width());
  std::vector<double> n(static_cast<std::size_t>(ds.num_classes()), 0);
  for (Eigen::Index i = 0; i < ds.num_instances(); ++i) {
    means.row(ds.labels[static_cast<std::size_t>(i)]) += ds.visual.row(i);
    n[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])] += 1;
  }
  for (Eigen::Index c = 0; c < means.rows(); ++c) means.row(c) /= n[static_cast<std::size_t>(c)];
  for (Eigen::Index i = 0; i < ds.num_instances(); ++i) ds.visual.row(i) = means.row(ds.labels[static_cast<std::size_t>(i)]);
  const srgan::Synthesizer echo = [&](int c, int k) {
    data::Matrix out(k, means.cols());
    out.rowwise() = means.row(c);
    return out;
  };
  srgan::EvalConfig ec;
  const double t1 = *srgan::run_zsl(ds, toy.info.split, ec, echo).T1;
  ec.mode = "gzsl";
  const auto g = srgan::run_gzsl(ds, toy.info.split, ec, echo);
  report(4, t1 == 100 && *g.U == 100 && *g.S == 100 && *g.H == 100,
         fmt("T1 %.2f, U %.2f, S %.2f", t1, *g.U, *g.S) + fmt(", H %.2f", *g.H));
}

void criterion5() {
  data::ToyConfig tc;  // --seen 10 --unseen 5 --dv 32 --ds 16 --overlap 0.3 --per-class 100
  const Toy toy = make_toy(tc);
  std::vector<double> t1;
  std::string each;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    t1.push_back(zsl_t1(toy, desk_config(seed)));
    each += fmt("%.1f ", t1.back());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double med = median(t1);
  report(5, med >= 80 && secs < 600,
         fmt("median unseen T1 %.2f (chance 20), ", med) + "per seed: " + each + fmt("; %.0fs for 5 seeds", secs));
}

void criterion6() {
  std::vector<double> base, srn;
  std::string each;
  for (std::uint64_t seed = 1; seed <= 7; ++seed) {
    data::ToyConfig tc;
    tc.seed = seed;
    tc.overlap = 0.9;
    const Toy toy = make_toy(tc);
    srgan::TrainConfig cfg = desk_config(seed);
    cfg.use_rec = false;
    cfg.use_srn = false;
    base.push_back(zsl_t1(toy, cfg));
    cfg.use_srn = true;
    srn.push_back(zsl_t1(toy, cfg));
    each += fmt("(%.1f, %.1f) ", base.back(), srn.back());
  }
  const double mb = median(base), ms = median(srn);
  report(6, ms - mb >= 5,
         fmt("median T1 baseline %.2f, +SRN %.2f, gain %.2f (need >= 5); ", mb, ms, ms - mb) +
             "(baseline, +SRN) per seed: " + each);
}

// Cosine matrices of the seen-class semantic rows, rectified rows and pivots.
struct Geometry {
  double raw = 0, rectified = 0;
  mds::Diagnostic diag;
};

Geometry srn_geometry(double overlap) {
  data::ToyConfig tc;
  tc.overlap = overlap;
  const Toy toy = make_toy(tc);
  std::mt19937_64 rng(1);
  srgan::SrnConfig sc;
  const auto R = srgan::train_srn<double>(toy.norm, toy.info.split, sc, rng);
  const auto vp = data::compute_pivots(toy.norm, toy.info.split);
  const data::Matrix sem = srgan::seen_semantics(toy.norm, vp);
  const data::Matrix P = nd::cosine_matrix_values(vp.pivots);
  Geometry g;
  g.raw = (nd::cosine_matrix_values(sem) - P).norm();
  g.rectified = (nd::cosine_matrix_values(srgan::rectify(R, sem)) - P).norm();
  g.diag = mds::build_diagnostic(toy.norm, toy.info.split, R);
  std::vector<std::pair<int, int>> seen_pairs;
  for (auto p : toy.info.confusable) seen_pairs.push_back(p);
  std::printf("  diagnostic (overlap %.2f): min 2-D distance of confusable pairs, semantic %.4f, rectified %.4f, pivot %.4f\n",
              overlap, mds::min_pair_distance(g.diag, g.diag.semantic, seen_pairs),
              mds::min_pair_distance(g.diag, g.diag.rectified, seen_pairs),
              mds::min_pair_distance(g.diag, g.diag.pivot, seen_pairs));
  return g;
}

void criterion7() {
  const Geometry g = srn_geometry(0.9);
  report(7, g.rectified < 0.5 * g.raw,
         fmt("||cos(R(s)) - cos(P)||_F = %.4f vs ||cos(s) - cos(P)||_F = %.4f, ratio %.4f (need < 0.5)",
             g.rectified, g.raw, g.rectified / g.raw));
  srn_geometry(0.95);
}

void criterion8() {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> count(1, 50), dim(1, 6), rank(0, 2);
  std::normal_distribution<double> gauss(0.0, 5.0);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = count(rng), d = std::max(dim(rng), 2), r = rank(rng);
    data::Matrix basis(r, d), coef(n, r), x(n, d);
    for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = gauss(rng);
    for (Eigen::Index i = 0; i < coef.size(); ++i) coef.data()[i] = gauss(rng);
    x = r == 0 ? data::Matrix(data::Matrix::Zero(n, d)) : data::Matrix(coef * basis);
    x.rowwise() += data::Matrix(data::Matrix::Constant(1, d, gauss(rng))).row(0);
    const data::Matrix dist = mds::euclidean_distances(x);
    const auto e = mds::classical_mds(dist);
    worst = std::max(worst, (mds::euclidean_distances(e.coords) - dist).cwiseAbs().maxCoeff());
  }
  report(8, worst <= 1e-6, fmt("worst |embedded - input| distance over 200 configurations: %.2e", worst));
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string("\"") + SRGAN_CLI + "\" " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion9() {
  TempDir dir;
  const std::string d = (dir / "toy").string();
  testing_util::write_file(dir / "cfg.ini",
                           "m = 32\nsrn_iters = 100\ngan_iters = 30\nd_z = 8\nsrn_hidden = 32\ngen_hidden = 16\n"
                           "disc_hidden = 16\nenc_hidden = 16\npost_hidden = 16\n");
  bool ok = run_cli("gen-toy --seed 9 --out " + d) == 0;
  for (const char* out : {"a", "b"})
    ok = ok && run_cli("train-gan --data " + d + " --seed 11 --config " + (dir / "cfg.ini").string() + " --out " +
                       (dir / out).string()) == 0;
  bool same = ok;
  std::string detail;
  for (const char* f : {"loss.csv", "srn_loss.csv", "model.srgn"}) {
    const std::string a = testing_util::read_file(dir / "a" / f), b = testing_util::read_file(dir / "b" / f);
    same = same && !a.empty() && a == b;
    detail += std::string(f) + (a == b && !a.empty() ? " identical, " : " DIFFERENT, ");
  }
  report(9, same, ok ? detail + "two CLI runs with seed 11" : "CLI run failed");
}

}  // namespace

int main() {
  const std::vector<void (*)()> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                            criterion6, criterion7, criterion8, criterion9};
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    try {
      criteria[k]();
    } catch (const std::exception& e) {
      report(static_cast<int>(k + 1), false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures;
}
