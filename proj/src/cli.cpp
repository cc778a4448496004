#include "hypalign/cli.hpp"

#include "hypalign/embed.hpp"
#include "hypalign/hierarchy.hpp"
#include "hypalign/io.hpp"
#include "hypalign/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace hypalign::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double x, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::string fmt_percent(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.1f", x);
  return buf;
}

json load_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  std::ifstream in(*path);
  if (!in) throw std::invalid_argument("cannot open config '" + *path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config '" + *path + "': " + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config '" + *path + "' must be a JSON object");
  return j;
}

// Reads known flat keys out of a config object and rejects anything else.
class ConfigReader {
 public:
  explicit ConfigReader(const json& j) : j_(j) {}

  template <typename T>
  void get(const char* key, T& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("config key '") + key + "' has the wrong type");
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& target) {
    if (j_.contains(key) && j_.at(key).is_null()) {
      seen_.insert(key);
      target.reset();
      return;
    }
    T value{};
    const bool present = j_.contains(key);
    get(key, value);
    if (present) target = value;
  }

  template <typename T, typename Parse>
  void get_enum(const char* key, T& target, Parse parse) {
    std::optional<std::string> name;
    get(key, name);
    if (name) target = parse(*name);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::set<std::string> seen_;
};

template <typename T>
void override(std::optional<T> flag, T& target) {
  if (flag) target = *flag;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::string out_dir = ".";
};

struct EmbedFlags {
  std::string edge_file;
  std::optional<std::string> output;
  std::optional<int> dim, epochs, negatives, burn_in, batch_size;
  std::optional<double> lr;
};

struct MatchFlags {
  std::string source, target;
  std::optional<std::string> truth;
  std::optional<std::string> cost, layer_type, nonlinearity, pretrain, optimizer, metric;
  std::optional<int> layers, hidden, pretrain_iters, steps, sinkhorn_max_iters, select_every;
  std::optional<double> pretrain_lr, epsilon0, epsilon_final, decay, lr, sinkhorn_tol;
  std::optional<std::vector<int>> eval_k;
  std::string baseline = "none";
  std::string ablate = "none";
};

struct EvalFlags {
  std::string matching, truth;
  std::vector<int> ks = {1, 10};
  std::optional<std::string> output;
};

struct PerturbFlags {
  std::string edge_file;
  double p = 0.1;
  bool sweep = false;
  std::optional<std::string> output;
};

struct DiagnoseFlags {
  std::vector<std::string> files;
  std::optional<std::string> plot_data;
};

EmbedConfig embed_config(const Globals& g, const EmbedFlags& f) {
  EmbedConfig cfg;
  const json j = load_config(g.config);
  ConfigReader r(j);
  r.get("dim", cfg.dim);
  r.get("epochs", cfg.epochs);
  r.get("learning_rate", cfg.learning_rate);
  r.get("negatives_per_pair", cfg.negatives_per_pair);
  r.get("burn_in_epochs", cfg.burn_in_epochs);
  r.get("batch_size", cfg.batch_size);
  r.get("init_radius", cfg.init_radius);
  r.get("margin", cfg.margin);
  r.get("seed", cfg.seed);
  r.finish();
  override(f.dim, cfg.dim);
  override(f.epochs, cfg.epochs);
  override(f.lr, cfg.learning_rate);
  override(f.negatives, cfg.negatives_per_pair);
  override(f.burn_in, cfg.burn_in_epochs);
  override(f.batch_size, cfg.batch_size);
  override(g.seed, cfg.seed);
  cfg.validate();
  return cfg;
}

pipeline::MatchConfig match_config(const Globals& g, const MatchFlags& f) {
  pipeline::MatchConfig cfg;
  const json j = load_config(g.config);
  ConfigReader r(j);
  r.get_enum("cost", cfg.cost, geometry::parse_cost_kind);
  r.get("layers", cfg.arch.layers);
  r.get("hidden", cfg.arch.hidden);
  r.get_enum("layer_type", cfg.arch.type, registration::parse_layer_type);
  r.get_enum("nonlinearity", cfg.arch.nonlinearity, registration::parse_nonlinearity);
  r.get_enum("pretrain", cfg.pretrain, pipeline::parse_pretrain);
  r.get("pretrain_iters", cfg.pretrain_iters);
  r.get("pretrain_lr", cfg.pretrain_lr);
  r.get("epsilon0", cfg.epsilon0);
  r.get("epsilon_final", cfg.epsilon_final);
  r.get("decay", cfg.decay);
  r.get("steps", cfg.steps);
  r.get_enum("optimizer", cfg.optimizer, optim::parse_optimizer);
  r.get("lr", cfg.lr);
  r.get("seed", cfg.seed);
  r.get("eval_k", cfg.eval_k);
  r.get_enum("metric", cfg.metric, [](std::string_view name) {
    if (name == "poincare") return pipeline::RetrievalMetric::poincare;
    if (name == "euclidean") return pipeline::RetrievalMetric::euclidean;
    throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
  });
  r.get("sinkhorn_max_iters", cfg.sinkhorn_max_iters);
  r.get("sinkhorn_tolerance", cfg.sinkhorn_tolerance);
  r.get("final_sinkhorn_max_iters", cfg.final_sinkhorn_max_iters);
  r.get("select_every", cfg.select_every);
  r.finish();

  if (f.cost) cfg.cost = geometry::parse_cost_kind(*f.cost);
  if (f.layer_type) cfg.arch.type = registration::parse_layer_type(*f.layer_type);
  if (f.nonlinearity) cfg.arch.nonlinearity = registration::parse_nonlinearity(*f.nonlinearity);
  if (f.pretrain) cfg.pretrain = pipeline::parse_pretrain(*f.pretrain);
  if (f.optimizer) cfg.optimizer = optim::parse_optimizer(*f.optimizer);
  if (f.metric) {
    cfg.metric = *f.metric == "euclidean" ? pipeline::RetrievalMetric::euclidean
                                          : pipeline::RetrievalMetric::poincare;
  }
  override(f.layers, cfg.arch.layers);
  override(f.hidden, cfg.arch.hidden);
  override(f.pretrain_iters, cfg.pretrain_iters);
  override(f.pretrain_lr, cfg.pretrain_lr);
  override(f.epsilon0, cfg.epsilon0);
  override(f.decay, cfg.decay);
  // An explicit decay flag selects the fixed-ratio schedule.
  if (f.decay && !f.epsilon_final) cfg.epsilon_final.reset();
  if (f.epsilon_final) cfg.epsilon_final = *f.epsilon_final;
  override(f.steps, cfg.steps);
  override(f.lr, cfg.lr);
  override(f.eval_k, cfg.eval_k);
  override(f.sinkhorn_max_iters, cfg.sinkhorn_max_iters);
  override(f.sinkhorn_tol, cfg.sinkhorn_tolerance);
  override(f.select_every, cfg.select_every);
  override(g.seed, cfg.seed);
  if (f.ablate == "euclidean") {
    cfg.cost = geometry::CostKind::euclidean_squared;
    cfg.metric = pipeline::RetrievalMetric::euclidean;
  }
  cfg.validate();
  return cfg;
}

int cmd_embed(const Globals& g, const EmbedFlags& f, std::ostream& out) {
  const EmbedConfig cfg = embed_config(g, f);
  const Hierarchy h = io::read_edge_list(f.edge_file);
  const Hierarchy closure = transitive_closure(h);
  const auto result = train_embedding(closure, cfg);
  const fs::path path = f.output ? fs::path(*f.output) : fs::path(g.out_dir) / "embedding.tsv";
  io::write_embedding(path, result.cloud);
  out << "nodes " << h.size() << ", edges " << h.edges().size() << ", closure edges "
      << closure.edges().size() << '\n';
  out << "final loss " << fmt(result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << '\n';
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

std::vector<std::pair<std::string, std::string>> default_truth(const PointCloud& X,
                                                               const PointCloud& Y) {
  std::unordered_set<std::string> targets(Y.labels.begin(), Y.labels.end());
  std::vector<std::pair<std::string, std::string>> truth;
  for (const auto& l : X.labels) {
    if (targets.count(l)) truth.emplace_back(l, l);
  }
  return truth;
}

std::string rotation_text(const geometry::Matrix& P) {
  std::ostringstream s;
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", P(r, c));
      s << (c ? "\t" : "") << buf;
    }
    s << '\n';
  }
  return s.str();
}

int cmd_match(const Globals& g, const MatchFlags& f, std::ostream& out, std::ostream& err) {
  if (f.baseline != "none" && f.baseline != "orthogonal") {
    throw std::invalid_argument("unknown baseline '" + f.baseline + "'");
  }
  if (f.ablate != "none" && f.ablate != "euclidean") {
    throw std::invalid_argument("unknown ablation '" + f.ablate + "'");
  }
  const auto cfg = match_config(g, f);
  const PointCloud X = io::read_embedding(f.source);
  const PointCloud Y = io::read_embedding(f.target);
  if (X.dim() != Y.dim()) {
    throw std::invalid_argument("embedding dimensions differ: " + std::to_string(X.dim()) +
                                " vs " + std::to_string(Y.dim()));
  }
  const auto truth = f.truth ? io::read_pairs(*f.truth) : default_truth(X, Y);
  const fs::path dir(g.out_dir);
  const int kmax = *std::max_element(cfg.eval_k.begin(), cfg.eval_k.end());

  std::vector<pipeline::RankedList> rankings;
  if (f.baseline == "orthogonal") {
    const auto res = pipeline::alternating_baseline(X, Y, cfg);
    rankings = pipeline::extract_matching(X, res.mapped, kmax, cfg.metric);
    io::write_coupling(dir / "coupling.tsv", res.coupling);
    io::write_argmax(dir / "argmax.tsv", res.coupling, X.labels, Y.labels);
    io::write_trace(dir / "trace.csv", res.trace);
    io::write_text(dir / "rotation.tsv", rotation_text(res.P));
    if (!res.coupling_converged) {
      err << "warning: final coupling did not reach the marginal tolerance\n";
    }
    out << "baseline orthogonal, final objective "
        << fmt(res.trace.empty() ? 0.0 : res.trace.back().divergence) << '\n';
  } else {
    const auto res = pipeline::train_registration(X, Y, cfg);
    rankings = res.rankings;
    io::write_coupling(dir / "coupling.tsv", res.coupling);
    io::write_argmax(dir / "argmax.tsv", res.coupling, X.labels, Y.labels);
    io::write_trace(dir / "trace.csv", res.trace);
    io::write_checkpoint(dir / "network.ckpt", res.network, cfg.seed);
    if (!res.coupling_converged) {
      err << "warning: final coupling did not reach the marginal tolerance\n";
    }
    out << "pretrain objective " << fmt(res.pretrain_objective) << ", selected iteration "
        << res.selected_iter << ", divergence " << fmt(res.selected_divergence) << '\n';
  }
  io::write_matching(dir / "matching.tsv", rankings);
  if (truth.empty()) {
    out << "no shared labels; precision not reported\n";
  } else {
    for (int k : cfg.eval_k) {
      out << "P@" << k << " = " << fmt_percent(pipeline::precision_at_k(rankings, truth, k))
          << '\n';
    }
  }
  out << "wrote " << (dir / "matching.tsv").string() << '\n';
  return kExitOk;
}

int cmd_eval(const Globals& g, const EvalFlags& f, std::ostream& out, std::ostream& err) {
  const auto lists = io::read_matching(f.matching);
  const auto truth = io::read_pairs(f.truth);
  if (truth.empty()) throw std::invalid_argument("ground truth file '" + f.truth + "' is empty");
  std::unordered_set<std::string> sources;
  for (const auto& l : lists) sources.insert(l.source);
  std::size_t missing = 0;
  for (const auto& [s, t] : truth) missing += sources.count(s) ? 0 : 1;
  if (missing) err << "warning: " << missing << " truth sources absent from the matching\n";

  std::ostringstream csv;
  csv << "k,precision\n";
  for (int k : f.ks) {
    const double p = pipeline::precision_at_k(lists, truth, k);
    csv << k << ',' << fmt_percent(p) << '\n';
  }
  const fs::path path = f.output ? fs::path(*f.output) : fs::path(g.out_dir) / "precision.csv";
  io::write_text(path, csv.str());
  out << csv.str();
  return kExitOk;
}

std::string p_tag(double p) {
  std::string s = fmt(p);
  std::replace(s.begin(), s.end(), '.', '_');
  return s;
}

int cmd_perturb(const Globals& g, const PerturbFlags& f, std::ostream& out) {
  const Hierarchy h = io::read_edge_list(f.edge_file);
  tree_root(h);
  const std::vector<double> ps = f.sweep ? std::vector<double>{0.01, 0.05, 0.1, 0.2}
                                         : std::vector<double>{f.p};
  const std::uint64_t seed = g.seed.value_or(0);
  for (double p : ps) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in [0, 1)");
    std::mt19937_64 rng(seed);
    const Hierarchy noisy = perturb_hierarchy(h, p, rng);
    const fs::path path = (f.output && !f.sweep)
                              ? fs::path(*f.output)
                              : fs::path(g.out_dir) / ("perturbed_p" + p_tag(p) + ".tsv");
    io::write_edge_list(path, noisy);
    out << "p " << fmt(p) << ": " << noisy.size() << " nodes, " << noisy.edges().size()
        << " edges -> " << path.string() << '\n';
  }
  return kExitOk;
}

int cmd_diagnose(const DiagnoseFlags& f, std::ostream& out) {
  if (f.files.size() < 2 || f.files.size() % 2 != 0) {
    throw std::invalid_argument("diagnose expects embedding files in pairs");
  }
  std::ostringstream csv;
  csv << "file_a,file_b,dim,discrepancy\n";
  for (std::size_t i = 0; i < f.files.size(); i += 2) {
    const PointCloud a = io::read_embedding(f.files[i]);
    const PointCloud b = io::read_embedding(f.files[i + 1]);
    const double value = pipeline::distance_matrix_discrepancy(a, b);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out << f.files[i] << " vs " << f.files[i + 1] << ": discrepancy " << buf << '\n';
    csv << f.files[i] << ',' << f.files[i + 1] << ',' << a.dim() << ',' << buf << '\n';
  }
  if (f.plot_data) io::write_text(*f.plot_data, csv.str());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hyperbolic embedding alignment with optimal transport"};
  app.require_subcommand(1);
  // Global options may also follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (default 0)");
  app.add_option("--config", g.config, "JSON file with flat configuration keys")
      ->check(CLI::ExistingFile);
  app.add_option("--out-dir", g.out_dir, "Directory for output files");

  EmbedFlags ef;
  auto* embed = app.add_subcommand("embed", "Train a Poincare embedding of an edge list");
  embed->add_option("edges", ef.edge_file, "child<TAB>parent edge list")->required();
  embed->add_option("--output", ef.output, "Embedding file (default <out-dir>/embedding.tsv)");
  embed->add_option("--dim", ef.dim);
  embed->add_option("--epochs", ef.epochs);
  embed->add_option("--lr", ef.lr);
  embed->add_option("--negatives", ef.negatives);
  embed->add_option("--burn-in", ef.burn_in);
  embed->add_option("--batch-size", ef.batch_size);

  MatchFlags mf;
  auto* match = app.add_subcommand("match", "Align a target embedding onto a source embedding");
  match->add_option("source", mf.source)->required();
  match->add_option("target", mf.target)->required();
  match->add_option("--truth", mf.truth, "source<TAB>target pairs (default: shared labels)");
  match->add_option("--cost", mf.cost);
  match->add_option("--layers", mf.layers);
  match->add_option("--hidden", mf.hidden);
  match->add_option("--layer-type", mf.layer_type);
  match->add_option("--nonlinearity", mf.nonlinearity);
  match->add_option("--pretrain", mf.pretrain);
  match->add_option("--pretrain-iters", mf.pretrain_iters);
  match->add_option("--pretrain-lr", mf.pretrain_lr);
  match->add_option("--epsilon0", mf.epsilon0);
  match->add_option("--epsilon-final", mf.epsilon_final);
  match->add_option("--decay", mf.decay);
  match->add_option("--steps", mf.steps);
  match->add_option("--optimizer", mf.optimizer);
  match->add_option("--lr", mf.lr);
  match->add_option("--eval-k", mf.eval_k)->delimiter(',');
  match->add_option("--metric", mf.metric)->check(CLI::IsMember({"poincare", "euclidean"}));
  match->add_option("--sinkhorn-max-iters", mf.sinkhorn_max_iters);
  match->add_option("--sinkhorn-tol", mf.sinkhorn_tol);
  match->add_option("--select-every", mf.select_every);
  match->add_option("--baseline", mf.baseline)->check(CLI::IsMember({"none", "orthogonal"}));
  match->add_option("--ablate", mf.ablate)->check(CLI::IsMember({"none", "euclidean"}));

  EvalFlags vf;
  auto* eval = app.add_subcommand("eval", "Precision at k of a matching file");
  eval->add_option("matching", vf.matching)->required();
  eval->add_option("truth", vf.truth)->required();
  eval->add_option("--k", vf.ks)->delimiter(',');
  eval->add_option("--output", vf.output, "CSV path (default <out-dir>/precision.csv)");

  PerturbFlags pf;
  auto* perturb = app.add_subcommand("perturb", "Randomly remove tree nodes");
  perturb->add_option("edges", pf.edge_file)->required();
  perturb->add_option("--p", pf.p, "Removal probability");
  perturb->add_flag("--sweep", pf.sweep, "Write one file per p in {0.01, 0.05, 0.1, 0.2}");
  perturb->add_option("--output", pf.output);

  DiagnoseFlags df;
  auto* diagnose = app.add_subcommand("diagnose", "Distance-matrix discrepancy of embeddings");
  diagnose->add_option("files", df.files, "Embedding files, in pairs")->required();
  diagnose->add_option("--plot-data", df.plot_data, "CSV of discrepancy per pair");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (embed->parsed()) return cmd_embed(g, ef, out);
    if (match->parsed()) return cmd_match(g, mf, out, err);
    if (eval->parsed()) return cmd_eval(g, vf, out, err);
    if (perturb->parsed()) return cmd_perturb(g, pf, out);
    if (diagnose->parsed()) return cmd_diagnose(df, out);
  } catch (const pipeline::NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace hypalign::cli
