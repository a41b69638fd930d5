#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "srgan/checkpoint.hpp"
#include "srgan/data/toy.hpp"
#include "srgan/eval.hpp"
#include "srgan/mds.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace srgan;

namespace {

// Bad flags or config files; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a training subcommand needs after config file and flags are merged.
struct RunSpec {
  std::string command;
  std::string data;
  std::string srn;  // pretrained SRN checkpoint, optional
  TrainConfig train;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Typed JSON value for an INI entry, using the type of the default.
json ini_value(const json& like, const std::string& key, const std::string& text, int line) {
  auto bad = [&] { return UsageError("config line " + std::to_string(line) + ": bad value for '" + key + "'"); };
  std::string v = text;
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
  try {
    std::size_t used = 0;
    if (like.is_boolean()) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw bad();
    }
    if (like.is_number_unsigned()) {
      if (v.empty() || v.front() == '-') throw bad();
      const auto n = std::stoull(v, &used);
      if (used != v.size()) throw bad();
      return n;
    }
    if (like.is_number_integer()) {
      const auto n = std::stoll(v, &used);
      if (used != v.size()) throw bad();
      return n;
    }
    if (like.is_number_float()) {
      const double d = std::stod(v, &used);
      if (used != v.size()) throw bad();
      return d;
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
  return v;
}

void set_train(RunSpec& spec, const json& j) {
  try {
    if (!j.is_object()) throw DataError("config: 'train' must be an object");
    const json known = TrainConfig{};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!known.contains(it.key())) throw DataError("config: unknown key '" + it.key() + "'");
    json merged = spec.train;
    merged.update(j);
    spec.train = merged.get<TrainConfig>();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

// Either a run.json written by a previous run, or INI-style `key = value`
// lines (optional [section] headers, # and ; comments).
void apply_config_file(RunSpec& spec, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw UsageError("config: " + std::string(e.what()));
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k == "train") {
        set_train(spec, it.value());
      } else if (k == "data" || k == "srn") {
        const std::string v = it.value().is_string() ? it.value().get<std::string>() : "";
        (k == "data" ? spec.data : spec.srn) = v;
      } else if (k != "command" && k != "seed") {
        throw UsageError("config: unknown key '" + k + "'");
      }
    }
    if (j.contains("seed")) set_train(spec, json{{"seed", j["seed"]}});
    return;
  }
  const json defaults = TrainConfig{};
  json train = json::object();
  std::istringstream lines(text);
  std::string raw;
  int n = 0;
  while (std::getline(lines, raw)) {
    ++n;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "data") {
      spec.data = value;
    } else if (key == "srn") {
      spec.srn = value;
    } else if (defaults.contains(key)) {
      train[key] = ini_value(defaults[key], key, value, n);
    } else {
      throw UsageError("config: unknown key '" + key + "'");
    }
  }
  set_train(spec, train);
}

json run_json(const RunSpec& spec) {
  json j;
  j["command"] = spec.command;
  j["data"] = spec.data;
  j["srn"] = spec.srn.empty() ? json(nullptr) : json(spec.srn);
  j["seed"] = spec.train.seed;
  j["train"] = spec.train;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

data::Loaded load_data(const std::string& where) {
  fs::path p = where;
  if (fs::is_directory(p)) p /= "manifest.json";
  return data::load(p);
}

std::string loss_csv(const std::vector<LossRecord>& history) {
  std::string s = loss_csv_header() + "\n";
  for (const auto& r : history) s += loss_csv_row(r) + "\n";
  return s;
}

std::string srn_csv(const SrnHistory& h) {
  std::string s = "iter,structure,semantic,total\n";
  for (std::size_t i = 0; i < h.structure.size(); ++i)
    s += std::to_string(i) + "," + format_loss_value(h.structure[i]) + "," + format_loss_value(h.semantic[i]) + "," +
         format_loss_value(h.structure[i] + h.semantic[i]) + "\n";
  return s;
}

struct Trained {
  ModelBundle<double> bundle;  // always returned in double for evaluation
  TrainResult result;
};

template <typename T>
ModelBundle<double> widen(const ModelBundle<T>& b) {
  if constexpr (std::is_same_v<T, double>) return b;
  else return deserialize<double>(serialize(b));
}

// Trains on the normalized dataset; an optional pretrained R replaces phase 1.
template <typename T>
Trained train_as(const data::Dataset& norm, const data::SplitSpec& split, const RunSpec& spec) {
  TrainConfig cfg = spec.train;
  std::optional<ModelBundle<T>> pre;
  if (!spec.srn.empty()) {
    pre = load_checkpoint<T>(spec.srn);
    bind(*pre, norm);
    cfg.srn_hidden = pre->config.srn_hidden;
    cfg.srn_iters = 0;
  }
  ModelBundle<T> b = init_bundle<T>(norm, split, cfg);
  if (pre) {
    b.srn = pre->srn;
    b.opt_srn = pre->opt_srn;
  }
  Trained t;
  t.result = train(b, norm, split);
  t.bundle = widen(b);
  return t;
}

Trained train_any(const data::Dataset& norm, const data::SplitSpec& split, const RunSpec& spec) {
  return spec.train.precision == "float" ? train_as<float>(norm, split, spec) : train_as<double>(norm, split, spec);
}

void finish_run_spec(RunSpec& spec, const std::optional<std::uint64_t>& seed, const std::optional<int>& iters,
                     bool srn_only) {
  if (seed) spec.train.seed = *seed;
  if (iters) (srn_only ? spec.train.srn_iters : spec.train.gan_iters) = *iters;
  if (srn_only) spec.train.gan_iters = 0;
  try {
    spec.train.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  if (spec.data.empty()) throw UsageError("--data is required (flag or config file)");
}

Classifier parse_classifier(const std::string& s) {
  if (s == "centroid") return Classifier::nearest_centroid;
  if (s == "disc") return Classifier::disc_head;
  throw UsageError("--classifier must be centroid or disc");
}

const std::string kDefaultsHelp = [] {
  std::string s = "Training defaults (config keys):\n";
  const json d = TrainConfig{};
  for (auto it = d.begin(); it != d.end(); ++it) s += "  " + it.key() + " = " + it.value().dump() + "\n";
  return s;
}();

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-rectifying GAN for zero-shot learning"};
  app.footer(kDefaultsHelp);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string data_path, out, model, srn_path, config_path, mode = "zsl", classifier = "centroid";
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
  int n_per_class = 300;

  data::ToyConfig toy;
  auto* gen = app.add_subcommand("gen-toy", "Write a synthetic dataset with confusable class pairs");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", toy.seed, "Random seed")->capture_default_str();
  gen->add_option("--seen", toy.n_seen, "Seen classes")->capture_default_str();
  gen->add_option("--unseen", toy.n_unseen, "Unseen classes")->capture_default_str();
  gen->add_option("--dv", toy.d_v, "Visual width")->capture_default_str();
  gen->add_option("--ds", toy.d_s, "Semantic width")->capture_default_str();
  gen->add_option("--overlap", toy.overlap, "Semantic overlap of confusable pairs in [0, 1]")->capture_default_str();
  gen->add_option("--per-class", toy.per_class, "Instances per class")->capture_default_str();
  gen->add_option("--occlusion", toy.occlusion, "Per-dimension occlusion probability")->capture_default_str();

  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--data", data_path, "Dataset directory or manifest.json");
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--seed", seed, "Random seed (overrides config)");
    sub->add_option("--config", config_path, "INI-style config or a previous run.json");
  };
  auto* tsrn = app.add_subcommand("train-srn", "Train the semantic rectifying network only");
  add_train_flags(tsrn);
  tsrn->add_option("--iters", iters, "SRN iterations (overrides config)");

  auto* tgan = app.add_subcommand("train-gan", "Train SRN then the GAN, or the GAN on a given SRN");
  add_train_flags(tgan);
  tgan->add_option("--iters", iters, "GAN outer iterations (overrides config)");
  tgan->add_option("--srn", srn_path, "Checkpoint whose SRN is reused (skips SRN training)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint in ZSL or GZSL mode");
  ev->add_option("--data", data_path, "Dataset directory or manifest.json")->required();
  ev->add_option("--model", model, "Checkpoint")->required();
  ev->add_option("--mode", mode, "zsl or gzsl")->check(CLI::IsMember({"zsl", "gzsl"}))->capture_default_str();
  ev->add_option("--n-per-class", n_per_class, "Synthetic features per unseen class")->capture_default_str();
  ev->add_option("--seed", seed, "Synthesis seed (default: the training seed)");
  ev->add_option("--classifier", classifier, "centroid or disc")->capture_default_str();
  ev->add_option("--out", out, "Directory for report.json and run.json (default: print)");

  auto* viz = app.add_subcommand("viz-mds", "2-D MDS of semantic, rectified and pivot spaces");
  viz->add_option("--data", data_path, "Dataset directory or manifest.json")->required();
  viz->add_option("--srn", srn_path, "Checkpoint providing the SRN");
  viz->add_option("--model", model, "Checkpoint providing the SRN (alias of --srn)");
  viz->add_option("--out", out, "Output directory")->required();

  auto* abl = app.add_subcommand("ablate", "Train and evaluate baseline, +rec, +SRN, +rec+SRN");
  add_train_flags(abl);
  abl->add_option("--iters", iters, "GAN outer iterations (overrides config)");
  abl->add_option("--n-per-class", n_per_class, "Synthetic features per unseen class")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const auto info = data::gen_toy(toy, out);
      std::cout << "wrote " << info.manifest.string() << "\n";
      return 0;
    }

    if (tsrn->parsed() || tgan->parsed() || abl->parsed()) {
      RunSpec spec;
      spec.command = tsrn->parsed() ? "train-srn" : tgan->parsed() ? "train-gan" : "ablate";
      if (!config_path.empty()) apply_config_file(spec, config_path);
      if (!data_path.empty()) spec.data = data_path;
      if (!srn_path.empty()) spec.srn = srn_path;
      finish_run_spec(spec, seed, iters, tsrn->parsed());
      const auto loaded = load_data(spec.data);
      const auto norm = data::normalize(loaded.dataset, loaded.split).dataset;
      fs::create_directories(out);
      write_text(fs::path(out) / "run.json", run_json(spec).dump(2) + "\n");

      if (abl->parsed()) {
        std::string csv = "variant,T1,U,S,H\n";
        const std::pair<const char*, std::pair<bool, bool>> variants[] = {
            {"baseline", {false, false}}, {"+rec", {true, false}}, {"+SRN", {false, true}}, {"+rec+SRN", {true, true}}};
        for (const auto& [name, flags] : variants) {
          RunSpec v = spec;
          v.train.use_rec = flags.first;
          v.train.use_srn = flags.second;
          const Trained t = train_any(norm, loaded.split, v);
          EvalConfig ec;
          ec.n_per_class = n_per_class;
          ec.seed = v.train.seed;
          const auto z = run_zsl(t.bundle, norm, loaded.split, ec);
          ec.mode = "gzsl";
          const auto g = run_gzsl(t.bundle, norm, loaded.split, ec);
          char row[160];
          std::snprintf(row, sizeof(row), "%s,%.4f,%.4f,%.4f,%.4f\n", name, *z.T1, *g.U, *g.S, *g.H);
          csv += row;
          std::cerr << row;
        }
        write_text(fs::path(out) / "ablation.csv", csv);
        return 0;
      }

      const Trained t = train_any(norm, loaded.split, spec);
      if (spec.train.use_srn && spec.train.srn_iters > 0 && spec.srn.empty())
        write_text(fs::path(out) / "srn_loss.csv", srn_csv(t.result.srn_history));
      if (tgan->parsed()) write_text(fs::path(out) / "loss.csv", loss_csv(t.result.history));
      save(t.bundle, fs::path(out) / (tsrn->parsed() ? "srn.srgn" : "model.srgn"));
      std::cout << "wrote " << (fs::path(out) / (tsrn->parsed() ? "srn.srgn" : "model.srgn")).string() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      const auto loaded = load_data(data_path);
      const auto norm = data::normalize(loaded.dataset, loaded.split).dataset;
      const auto b = load_checkpoint<double>(model);
      bind(b, norm);
      EvalConfig ec;
      ec.mode = mode;
      ec.n_per_class = n_per_class;
      ec.seed = seed ? *seed : b.config.seed;
      ec.classifier = parse_classifier(classifier);
      const auto report = mode == "zsl" ? run_zsl(b, norm, loaded.split, ec) : run_gzsl(b, norm, loaded.split, ec);
      const std::string text = to_json(report).dump(2) + "\n";
      if (out.empty()) {
        std::cout << text;
      } else {
        fs::create_directories(out);
        write_text(fs::path(out) / "report.json", text);
        json run = {{"command", "eval"}, {"data", data_path}, {"model", model}, {"seed", ec.seed},
                    {"eval", to_json(report)["config"]}};
        write_text(fs::path(out) / "run.json", run.dump(2) + "\n");
      }
      return 0;
    }

    if (viz->parsed()) {
      const std::string ckpt = !srn_path.empty() ? srn_path : model;
      if (ckpt.empty()) throw UsageError("viz-mds needs --srn or --model");
      const auto loaded = load_data(data_path);
      const auto norm = data::normalize(loaded.dataset, loaded.split).dataset;
      const auto b = load_checkpoint<double>(ckpt);
      bind(b, norm);
      const auto d = b.config.use_srn ? mds::build_diagnostic(norm, loaded.split, b.srn)
                                      : mds::build_diagnostic(norm, loaded.split, [](const data::Matrix& s) { return s; });
      mds::write_diagnostic(d, out);
      fs::path toy_json = fs::path(data_path);
      if (fs::is_directory(toy_json)) toy_json /= "toy.json";
      else toy_json = toy_json.parent_path() / "toy.json";
      json summary = {{"stress", {{"semantic", d.semantic.stress}, {"rectified", d.rectified.stress}, {"pivot", d.pivot.stress}}}};
      if (fs::exists(toy_json)) {
        std::ifstream in(toy_json);
        const auto pairs = json::parse(in).at("confusable").get<std::vector<std::pair<int, int>>>();
        summary["confusable_min_distance"] = {{"semantic", mds::min_pair_distance(d, d.semantic, pairs)},
                                              {"rectified", mds::min_pair_distance(d, d.rectified, pairs)},
                                              {"pivot", mds::min_pair_distance(d, d.pivot, pairs)}};
      }
      write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");
      std::cout << summary.dump() << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
