#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "srgan/adam.hpp"
#include "srgan/data/dataset.hpp"
#include "srgan/losses.hpp"
#include "srgan/srn.hpp"

namespace srgan {

struct TrainConfig {
  int m = 1024;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int n_d = 5;
  double lambda = 10.0;
  int srn_iters = 2000;
  int gan_iters = 3000;
  int g_extra_updates = 2;
  int vp_draws = 16;  // noise draws per seen class for the pivot loss
  Eigen::Index d_z = 100;
  Eigen::Index srn_hidden = 1024;
  Eigen::Index gen_hidden = 2048;
  Eigen::Index disc_hidden = 2048;
  Eigen::Index enc_hidden = 2048;
  Eigen::Index post_hidden = 2048;
  std::uint64_t seed = 0;
  std::string precision = "double";  // "double" or "float"
  bool use_srn = true;  // false: R is the identity and phase 1 is skipped
  bool use_rec = true;  // false: no pre/post reconstruction steps
  std::string head = "seen";  // classifier label space of D: "seen" or "all"

  void validate() const {
    auto fail = [](const std::string& what) { throw DataError("config: " + what); };
    if (m < 1) fail("m must be >= 1");
    if (!(lr > 0)) fail("lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
    if (n_d < 1) fail("n_d must be >= 1");
    if (!(lambda >= 0)) fail("lambda must be >= 0");
    if (srn_iters < 0 || gan_iters < 0) fail("iteration counts must be >= 0");
    if (g_extra_updates < 0) fail("g_extra_updates must be >= 0");
    if (vp_draws < 1) fail("vp_draws must be >= 1");
    if (d_z < 1 || srn_hidden < 1 || gen_hidden < 1 || disc_hidden < 1 || enc_hidden < 1 ||
        post_hidden < 1)
      fail("widths must be >= 1");
    if (precision != "double" && precision != "float") fail("precision must be double or float");
    if (head != "seen" && head != "all") fail("head must be seen or all");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"m", c.m},
                     {"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"n_d", c.n_d},
                     {"lambda", c.lambda},
                     {"srn_iters", c.srn_iters},
                     {"gan_iters", c.gan_iters},
                     {"g_extra_updates", c.g_extra_updates},
                     {"vp_draws", c.vp_draws},
                     {"d_z", c.d_z},
                     {"srn_hidden", c.srn_hidden},
                     {"gen_hidden", c.gen_hidden},
                     {"disc_hidden", c.disc_hidden},
                     {"enc_hidden", c.enc_hidden},
                     {"post_hidden", c.post_hidden},
                     {"seed", c.seed},
                     {"precision", c.precision},
                     {"use_srn", c.use_srn},
                     {"use_rec", c.use_rec},
                     {"head", c.head}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw DataError("config: expected a JSON object");
  const nlohmann::json known = TrainConfig{};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw DataError("config: unknown key '" + it.key() + "'");
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw DataError(std::string("config: bad value for '") + key + "'");
    }
  };
  get("m", c.m);
  get("lr", c.lr);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("n_d", c.n_d);
  get("lambda", c.lambda);
  get("srn_iters", c.srn_iters);
  get("gan_iters", c.gan_iters);
  get("g_extra_updates", c.g_extra_updates);
  get("vp_draws", c.vp_draws);
  get("d_z", c.d_z);
  get("srn_hidden", c.srn_hidden);
  get("gen_hidden", c.gen_hidden);
  get("disc_hidden", c.disc_hidden);
  get("enc_hidden", c.enc_hidden);
  get("post_hidden", c.post_hidden);
  get("seed", c.seed);
  get("precision", c.precision);
  get("use_srn", c.use_srn);
  get("use_rec", c.use_rec);
  get("head", c.head);
}

// All trained state: the five networks, their optimizer moments, and enough
// metadata to rebuild the label spaces.
template <typename T>
struct ModelBundle {
  TrainConfig config;
  NetworkShape shape;
  std::vector<int> head_classes;  // class id for each classifier logit of D
  SrnParams<T> srn;
  GenParams<T> gen;
  DiscParams<T> disc;
  EncParams<T> enc;
  PostParams<T> post;
  AdamState<T> opt_srn, opt_gen, opt_disc, opt_enc, opt_post;
  std::int64_t iteration = 0;  // completed outer iterations of phase 2

  // Rectified semantics as the generator sees them: R(s), or s when R is disabled.
  nd::Tensor<T> rectified(const nd::Tensor<T>& semantic) const {
    return config.use_srn ? rectify(srn, semantic) : semantic;
  }

  template <typename F>
  void for_each_network_tensor(F&& f) const {
    srn.net.for_each_tensor("srn.", f);
    gen.net.for_each_tensor("gen.", f);
    disc.for_each_tensor("disc.", f);
    enc.net.for_each_tensor("enc.", f);
    post.net.for_each_tensor("post.", f);
  }

  template <typename F>
  void for_each_network_tensor(F&& f) {
    srn.net.for_each_tensor("srn.", f);
    gen.net.for_each_tensor("gen.", f);
    disc.for_each_tensor("disc.", f);
    enc.net.for_each_tensor("enc.", f);
    post.net.for_each_tensor("post.", f);
  }
};

struct LossRecord {
  std::int64_t iter = 0;
  double loss_d = 0;   // last discriminator step of the iteration, Eq. 5 total
  double loss_g = 0;   // last generator step: adversarial + classification + pivot terms
  double loss_vp = 0;  // pivot term of that step
  double loss_e = 0;   // last pre-reconstruction step (0 when disabled)
  double loss_f = 0;   // last post-reconstruction step (0 when disabled)
};

struct TrainCounters {
  std::int64_t d_updates = 0;
  std::int64_t g_updates = 0;
  std::int64_t e_updates = 0;
  std::int64_t f_updates = 0;
  // Discriminator updates made since the previous generator update, sampled at
  // the first generator update of every outer iteration.
  std::vector<int> d_before_g;
};

struct TrainResult {
  std::vector<LossRecord> history;
  SrnHistory srn_history;
  TrainCounters counters;
};

namespace detail {

// Independent deterministic streams so that toggling one phase does not shift
// the random draws of another.
enum class Stream : std::uint32_t { srn = 1, gan_init = 2, gan_steps = 3 };

inline std::mt19937_64 make_stream(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

template <typename T, typename Rng>
nd::Tensor<T> normal_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  nd::Tensor<T> z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<T>(n(rng));
  return z;
}

template <typename T>
std::vector<nd::Tensor<T>*> tensors(nd::MlpParams<T>& p) {
  std::vector<nd::Tensor<T>*> out;
  p.for_each_tensor("", [&](const std::string&, nd::Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::vector<nd::Tensor<T>*> tensors(DiscParams<T>& p) {
  std::vector<nd::Tensor<T>*> out;
  p.for_each_tensor("", [&](const std::string&, nd::Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
void step(nd::Graph<T>& g, std::vector<nd::Tensor<T>*> params, AdamState<T>& state,
          const AdamHyper& h) {
  std::vector<nd::Tensor<T>> grads;
  grads.reserve(params.size());
  for (auto* p : params) grads.push_back(g.grad_of(*p));
  adam_step<T>(params, grads, state, h);
}

inline std::string describe(std::int64_t iter, const char* term, const std::exception& e) {
  return "iteration " + std::to_string(iter) + ", " + term + ": " + e.what();
}

}  // namespace detail

// Builds the architecture described by a config and shape with fresh weights.
template <typename T>
ModelBundle<T> make_bundle(const TrainConfig& cfg, const NetworkShape& shape, std::vector<int> head_classes) {
  cfg.validate();
  ModelBundle<T> b;
  b.config = cfg;
  b.shape = shape;
  b.head_classes = std::move(head_classes);
  b.shape.head_classes = static_cast<Eigen::Index>(b.head_classes.size());
  auto srn_rng = detail::make_stream(cfg.seed, detail::Stream::srn);
  b.srn = make_srn<T>(b.shape.d_s, cfg.srn_hidden, srn_rng);
  auto rng = detail::make_stream(cfg.seed, detail::Stream::gan_init);
  b.gen = make_generator<T>(b.shape, rng);
  b.disc = make_discriminator<T>(b.shape, rng);
  b.enc = make_encoder<T>(b.shape, rng);
  b.post = make_post<T>(b.shape, rng);
  return b;
}

template <typename T>
ModelBundle<T> init_bundle(const data::Dataset& ds, const data::SplitSpec& split, const TrainConfig& cfg) {
  NetworkShape shape;
  shape.d_v = ds.visual_width();
  shape.d_s = ds.semantic_width();
  shape.d_z = cfg.d_z;
  shape.gen_hidden = cfg.gen_hidden;
  shape.disc_hidden = cfg.disc_hidden;
  shape.enc_hidden = cfg.enc_hidden;
  shape.post_hidden = cfg.post_hidden;
  std::vector<int> head = split.seen;
  if (cfg.head == "all") head.insert(head.end(), split.unseen.begin(), split.unseen.end());
  return make_bundle<T>(cfg, shape, std::move(head));
}

// Two-phase training on an already normalized dataset: R on the rectifying
// loss, then R frozen and the adversarial loop over D and (G, E, F).
template <typename T>
TrainResult train(ModelBundle<T>& b, const data::Dataset& ds, const data::SplitSpec& split,
                  const std::function<void(const LossRecord&)>& on_record = {}) {
  const TrainConfig& cfg = b.config;
  cfg.validate();
  data::validate(ds, split);
  if (ds.visual_width() != b.shape.d_v || ds.semantic_width() != b.shape.d_s)
    throw DimensionError("train: dataset widths " + nd::shape_str(ds.visual_width(), ds.semantic_width()) +
                         " do not match the model " + nd::shape_str(b.shape.d_v, b.shape.d_s));
  TrainResult result;
  const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};

  const data::VisualPivots vp = data::compute_pivots(ds, split);
  const nd::Tensor<T> pivots = vp.pivots.template cast<T>();
  const nd::Tensor<T> seen_sem = seen_semantics(ds, vp).template cast<T>();

  // Phase 1.
  if (cfg.use_srn && cfg.srn_iters > 0) {
    SrnConfig sc{cfg.srn_iters, cfg.srn_hidden, hyper};
    try {
      result.srn_history = train_srn<T>(b.srn, pivots, seen_sem, sc);
    } catch (const NumericError& e) {
      throw NumericError("SRN training diverged: " + std::string(e.what()));
    }
  }

  // R is fixed from here on: one rectified row per class.
  const nd::Tensor<T> all_sem = ds.semantic.template cast<T>();
  const nd::Tensor<T> rect = b.rectified(all_sem);
  nd::Tensor<T> seen_rect(seen_sem.rows(), seen_sem.cols());
  for (std::size_t k = 0; k < vp.class_ids.size(); ++k)
    seen_rect.row(static_cast<Eigen::Index>(k)) = rect.row(vp.class_ids[k]);

  std::vector<int> head_index(static_cast<std::size_t>(ds.num_classes()), -1);
  for (std::size_t k = 0; k < b.head_classes.size(); ++k)
    head_index[static_cast<std::size_t>(b.head_classes[k])] = static_cast<int>(k);

  auto rng = detail::make_stream(cfg.seed + static_cast<std::uint64_t>(b.iteration), detail::Stream::gan_steps);
  const data::BatchSampler sampler(ds, split);
  const auto m = static_cast<std::size_t>(cfg.m);
  const Eigen::Index rows = cfg.m;
  const T lambda = static_cast<T>(cfg.lambda);

  struct Conditioned {
    nd::Tensor<T> visual, semantic, rectified;
    std::vector<int> labels;
  };
  auto draw = [&]() {
    data::Batch batch = sampler.sample(m, rng);
    Conditioned c;
    c.visual = batch.visual.template cast<T>();
    c.semantic = batch.semantic.template cast<T>();
    c.rectified.resize(rows, c.semantic.cols());
    c.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      c.rectified.row(static_cast<Eigen::Index>(i)) = rect.row(batch.class_ids[i]);
      c.labels[i] = head_index[static_cast<std::size_t>(batch.class_ids[i])];
    }
    return c;
  };
  // Generated rows of unseen classes for an "all" classifier head.
  const bool unseen_head = cfg.head == "all" && !split.unseen.empty();
  auto draw_unseen = [&]() {
    std::uniform_int_distribution<std::size_t> pick(0, split.unseen.size() - 1);
    Conditioned c;
    c.semantic.resize(rows, all_sem.cols());
    c.rectified.resize(rows, all_sem.cols());
    c.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const int cls = split.unseen[pick(rng)];
      c.semantic.row(static_cast<Eigen::Index>(i)) = all_sem.row(cls);
      c.rectified.row(static_cast<Eigen::Index>(i)) = rect.row(cls);
      c.labels[i] = head_index[static_cast<std::size_t>(cls)];
    }
    return c;
  };

  int d_since_g = 0;
  for (int it = 0; it < cfg.gan_iters; ++it) {
    const std::int64_t iter = b.iteration;
    LossRecord rec;
    rec.iter = iter;

    for (int k = 0; k < cfg.n_d; ++k) {
      Conditioned c = draw();
      const nd::Tensor<T> z = detail::normal_noise<T>(rows, cfg.d_z, rng);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<T> eps(m);
      for (auto& e : eps) e = static_cast<T>(u(rng));
      try {
        const nd::Tensor<T> fake = generate(b.gen, c.semantic, c.rectified, z);
        nd::Graph<T> g;
        DiscLoss<T> l = loss_d<T>(g, b.disc, c.visual, fake, c.labels, eps, lambda);
        nd::Var<T> total = l.total;
        if (unseen_head) {
          Conditioned un = draw_unseen();
          const nd::Tensor<T> zu = detail::normal_noise<T>(rows, cfg.d_z, rng);
          auto out = critic_and_classify(b.disc, g.constant(generate(b.gen, un.semantic, un.rectified, zu)));
          total = nd::add(total, nd::scale(nd::softmax_cross_entropy(out.logits, un.labels), T(0.5)));
        }
        g.backward(total);
        detail::step(g, detail::tensors(b.disc), b.opt_disc, hyper);
        rec.loss_d = static_cast<double>(total.value()(0, 0));
      } catch (const NumericError& e) {
        throw NumericError(detail::describe(iter, "loss_D", e));
      }
      ++result.counters.d_updates;
      ++d_since_g;
    }

    for (int rep = 0; rep <= cfg.g_extra_updates; ++rep) {
      // Eq. 3: adversarial + classification + pivot terms, D frozen.
      {
        Conditioned c = draw();
        const nd::Tensor<T> z = detail::normal_noise<T>(rows, cfg.d_z, rng);
        const nd::Tensor<T> zp = detail::normal_noise<T>(
            static_cast<Eigen::Index>(vp.class_ids.size()) * cfg.vp_draws, cfg.d_z, rng);
        try {
          nd::Graph<T> g;
          nd::Var<T> fake = generate(b.gen, g.constant(c.semantic), g.constant(c.rectified), g.constant(z));
          GenAdvLoss<T> adv = loss_g_adv_cls(b.disc, fake, c.labels);
          nd::Var<T> total = adv.total;
          if (unseen_head) {
            Conditioned un = draw_unseen();
            const nd::Tensor<T> zu = detail::normal_noise<T>(rows, cfg.d_z, rng);
            nd::Var<T> fu = generate(b.gen, g.constant(un.semantic), g.constant(un.rectified), g.constant(zu));
            total = nd::add(total, loss_g_adv_cls(b.disc, fu, un.labels).cls);
          }
          nd::Var<T> vpl = loss_vp(g, b.gen, pivots, seen_sem, seen_rect, zp);
          total = nd::add(total, vpl);
          g.backward(total);
          detail::step(g, detail::tensors(b.gen.net), b.opt_gen, hyper);
          rec.loss_g = static_cast<double>(total.value()(0, 0));
          rec.loss_vp = static_cast<double>(vpl.value()(0, 0));
        } catch (const NumericError& e) {
          throw NumericError(detail::describe(iter, "loss_G", e));
        }
        if (rep == 0) result.counters.d_before_g.push_back(d_since_g);
        d_since_g = 0;
        ++result.counters.g_updates;
      }
      if (!cfg.use_rec) continue;
      // Eq. 6 on (G, E).
      {
        Conditioned c = draw();
        try {
          nd::Graph<T> g;
          nd::Var<T> l = loss_pre(g, b.enc, b.gen, c.visual, c.semantic, c.rectified);
          g.backward(l);
          detail::step(g, detail::tensors(b.gen.net), b.opt_gen, hyper);
          detail::step(g, detail::tensors(b.enc.net), b.opt_enc, hyper);
          rec.loss_e = static_cast<double>(l.value()(0, 0));
        } catch (const NumericError& e) {
          throw NumericError(detail::describe(iter, "loss_E", e));
        }
        ++result.counters.e_updates;
      }
      // Eq. 7 on (G, F).
      {
        Conditioned c = draw();
        const nd::Tensor<T> z = detail::normal_noise<T>(rows, cfg.d_z, rng);
        try {
          nd::Graph<T> g;
          nd::Var<T> l = loss_post(g, b.post, b.gen, c.semantic, c.rectified, z);
          g.backward(l);
          detail::step(g, detail::tensors(b.gen.net), b.opt_gen, hyper);
          detail::step(g, detail::tensors(b.post.net), b.opt_post, hyper);
          rec.loss_f = static_cast<double>(l.value()(0, 0));
        } catch (const NumericError& e) {
          throw NumericError(detail::describe(iter, "loss_F", e));
        }
        ++result.counters.f_updates;
      }
    }

    ++b.iteration;
    result.history.push_back(rec);
    if (on_record) on_record(rec);
  }
  return result;
}

// Normalizes, initializes and trains in one go.
template <typename T>
ModelBundle<T> train(const data::Dataset& raw, const data::SplitSpec& split, const TrainConfig& cfg,
                     TrainResult* result = nullptr,
                     const std::function<void(const LossRecord&)>& on_record = {}) {
  const data::Normalized norm = data::normalize(raw, split);
  ModelBundle<T> b = init_bundle<T>(norm.dataset, split, cfg);
  TrainResult r = train(b, norm.dataset, split, on_record);
  if (result) *result = std::move(r);
  return b;
}

inline std::string format_loss_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string loss_csv_header() { return "iter,loss_D,loss_G,loss_VP,loss_E,loss_F"; }

inline std::string loss_csv_row(const LossRecord& r) {
  return std::to_string(r.iter) + ',' + format_loss_value(r.loss_d) + ',' + format_loss_value(r.loss_g) +
         ',' + format_loss_value(r.loss_vp) + ',' + format_loss_value(r.loss_e) + ',' +
         format_loss_value(r.loss_f);
}

}  // namespace srgan
