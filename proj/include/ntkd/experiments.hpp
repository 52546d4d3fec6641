#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ntkd/data.hpp"
#include "ntkd/errors.hpp"
#include "ntkd/io.hpp"
#include "ntkd/kernels.hpp"
#include "ntkd/network.hpp"
#include "ntkd/regression.hpp"
#include "ntkd/spectrum.hpp"
#include "ntkd/stats.hpp"
#include "ntkd/training.hpp"

namespace ntkd {

using nlohmann::json;

namespace detail {

inline void check_keys(const json& obj, const std::string& ctx,
                       const std::vector<std::string>& required,
                       const std::vector<std::string>& optional) {
  if (!obj.is_object())
    throw validation_error(ctx + ": expected a JSON object");
  for (const auto& k : required)
    if (!obj.contains(k))
      throw validation_error(ctx + ": missing required field \"" + k + "\"");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    const bool known =
        std::find(required.begin(), required.end(), key) != required.end() ||
        std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known)
      throw validation_error(ctx + ": unknown field \"" + key + "\"");
  }
}

inline ActivationSpec parse_activation(const json& j, const std::string& ctx) {
  const std::string name = j.value("activation", "relu");
  if (name == "relu") return ActivationSpec::relu();
  if (name == "tanh") return ActivationSpec::tanh();
  if (name == "identity") return ActivationSpec::identity();
  if (name == "sigmoid") return ActivationSpec::sigmoid();
  if (name == "leaky_relu")
    return ActivationSpec::leaky_relu(j.value("leaky_slope", 0.1));
  throw validation_error(ctx + ": unknown activation \"" + name +
                         "\" (expected identity|relu|leaky_relu|tanh|sigmoid)");
}

inline NetworkConfig parse_network(const json& j, const std::string& ctx,
                                   int input_dim, int output_dim) {
  check_keys(j, ctx,
             {"width", "shortcuts", "separation", "weight_std", "bias_std",
              "layer_scaling", "activation"},
             {"leaky_slope", "use_bias"});
  NetworkConfig c = NetworkConfig::uniform(input_dim, output_dim,
                                           j.at("separation").get<int>(),
                                           j.at("shortcuts").get<int>(),
                                           j.at("width").get<int>());
  c.activation = parse_activation(j, ctx);
  c.apply_layer_scaling = j.at("layer_scaling").get<bool>();
  c.weight_std = j.at("weight_std").get<double>();
  c.bias_std = j.at("bias_std").get<double>();
  c.use_bias = j.value("use_bias", c.bias_std > 0.0);
  c.validate();
  return c;
}

inline TrainConfig parse_train(const json& j, const std::string& ctx) {
  check_keys(j, ctx, {"learning_rate", "epochs", "batch_size"}, {});
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.epochs = j.at("epochs").get<int>();
  t.batch_size = j.at("batch_size").get<int>();
  t.validate();
  return t;
}

inline json network_echo(const NetworkConfig& c) {
  json j{{"width", c.widths.empty() ? 0 : c.widths[0]},
         {"shortcuts", c.shortcuts},
         {"separation", c.separation},
         {"weight_std", c.weight_std},
         {"bias_std", c.bias_std},
         {"layer_scaling", c.apply_layer_scaling},
         {"activation", to_string(c.activation.kind)},
         {"use_bias", c.use_bias}};
  if (c.activation.kind == Activation::leaky_relu)
    j["leaky_slope"] = c.activation.leaky_slope;
  return j;
}

inline json train_echo(const TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size}};
}

// Deterministic worker pool: trial index -> preallocated slot, so the
// output never depends on scheduling order.
inline void run_indexed(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(size_t(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline std::filesystem::path resolve_data_path(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("NTKD_DATA_DIR")) path = std::filesystem::path(root) / path;
  }
  return path;
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = base + 0x9e3779b97f4a7c15ull * (a + 1) + 0xbf58476d1ce4e5b9ull * (b + 1);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  return h;
}

}  // namespace detail

// Parsed and validated experiment specification.
struct ExperimentSpec {
  std::string experiment;
  std::uint64_t seed = 0;
  int trials = 1;
  int jobs = 1;
  std::filesystem::path output_dir;
  json section;   // experiment-specific options, already key-checked
  json resolved;  // fully resolved echo written next to the results
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "sine",        "image_regression", "hbar_k_sweep", "lambda_min_scaling",
      "sigma_max_scaling", "invariance",  "gaussianity"};
  return names;
}

ExperimentSpec parse_experiment_spec(const json& root);

inline ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open spec file: " + path.string());
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw validation_error("spec file does not parse as JSON: " + std::string(e.what()));
  }
  return parse_experiment_spec(root);
}

// ---------------------------------------------------------------------------
// experiment implementations
// ---------------------------------------------------------------------------

struct ExperimentOutput {
  std::string results_csv;
  json summary;
  std::vector<std::pair<std::string, std::string>> extra_files;  // name -> body
};

namespace experiments {

// Kernel regression helper shared by the regression-style experiments.
// Returns the GP posterior mean for the trace kernel of `kind`.
inline Eigen::MatrixXd kernel_regression_mean(const Network& net, KernelKind kind,
                                              const Dataset& train_set,
                                              const Dataset& test_set) {
  const GramMatrix k_train = gram(net, kind, train_set.columns());
  const Eigen::MatrixXd k_cross =
      cross_gram(net, kind, test_set.columns(), train_set.columns());
  const Eigen::MatrixXd k_test = cross_gram(net, kind, test_set.columns(), test_set.columns());
  const RegressionResult r =
      gp_regress(k_train.entries, k_cross, k_test, train_set.y.transpose());
  return r.mean;  // n_test x label_dim
}

struct SineOptions {
  int n_train = 300;
  int n_test = 200;
  TrainConfig train;
  NetworkConfig deep;  // depth kernel source
  NetworkConfig wide;  // width kernel source
};

inline SineOptions parse_sine(const json& j) {
  detail::check_keys(j, "sine", {"n_train", "n_test", "train", "deep", "wide"}, {});
  SineOptions o;
  o.n_train = j.at("n_train").get<int>();
  o.n_test = j.at("n_test").get<int>();
  if (o.n_train < 1 || o.n_test < 1)
    throw validation_error("sine: n_train and n_test must be positive");
  o.train = detail::parse_train(j.at("train"), "sine.train");
  o.deep = detail::parse_network(j.at("deep"), "sine.deep", 1, 1);
  o.wide = detail::parse_network(j.at("wide"), "sine.wide", 1, 1);
  return o;
}

inline ExperimentOutput run_sine(const ExperimentSpec& spec) {
  const SineOptions o = parse_sine(spec.section);
  struct Row {
    double rmse_d = 0.0, rmse_w = 0.0;
    std::string loss_d, loss_w;
  };
  std::vector<Row> rows(size_t(spec.trials));

  detail::run_indexed(spec.trials, spec.jobs, [&](int t) {
    const std::uint64_t s = spec.seed + std::uint64_t(t);
    const Dataset all = gen_sine(o.n_train + o.n_test, s);
    Dataset train_set, test_set;
    train_set.x = all.x.leftCols(o.n_train);
    train_set.y = all.y.leftCols(o.n_train);
    test_set.x = all.x.rightCols(o.n_test);
    test_set.y = all.y.rightCols(o.n_test);

    auto run_kernel = [&](const NetworkConfig& cfg, KernelKind kind, double& rmse,
                          std::string& loss_csv) {
      Network net = init_network(cfg, detail::mix_seed(s, kind == KernelKind::depth_induced ? 1 : 2));
      TrainConfig tc = o.train;
      tc.seed = detail::mix_seed(s, 3, kind == KernelKind::depth_induced ? 1 : 2);
      TrainResult tr = train(std::move(net), train_set.x, train_set.y, tc);
      std::ostringstream loss;
      loss << "epoch,loss\n";
      for (size_t e = 0; e < tr.loss.size(); ++e)
        loss << e << ',' << format_g17(tr.loss[e]) << '\n';
      loss_csv = loss.str();
      const Eigen::MatrixXd mu =
          kernel_regression_mean(tr.network, kind, train_set, test_set);
      rmse = std::sqrt((mu - test_set.y.transpose()).squaredNorm() / double(o.n_test));
    };
    run_kernel(o.deep, KernelKind::depth_induced, rows[size_t(t)].rmse_d,
               rows[size_t(t)].loss_d);
    run_kernel(o.wide, KernelKind::width_induced, rows[size_t(t)].rmse_w,
               rows[size_t(t)].loss_w);
  });

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "trial,kernel,rmse\n";
  std::vector<double> rd, rw;
  for (int t = 0; t < spec.trials; ++t) {
    csv << t << ",ntk_d," << format_g17(rows[size_t(t)].rmse_d) << '\n';
    csv << t << ",ntk_w," << format_g17(rows[size_t(t)].rmse_w) << '\n';
    rd.push_back(rows[size_t(t)].rmse_d);
    rw.push_back(rows[size_t(t)].rmse_w);
    out.extra_files.emplace_back("loss_ntk_d_trial" + std::to_string(t) + ".csv",
                                 rows[size_t(t)].loss_d);
    out.extra_files.emplace_back("loss_ntk_w_trial" + std::to_string(t) + ".csv",
                                 rows[size_t(t)].loss_w);
  }
  out.results_csv = csv.str();
  out.summary = json{{"experiment", "sine"},
                     {"rmse",
                      {{"ntk_d", {{"mean", mean(rd)}, {"std", stddev(rd)}}},
                       {"ntk_w", {{"mean", mean(rw)}, {"std", stddev(rw)}}}}},
                     {"warnings", json::array()}};
  return out;
}

struct ImageOptions {
  std::string dataset;  // mnist | fashion_mnist | cifar10
  std::string images, labels;
  std::vector<std::string> batches;
  int n_train = 250, n_test = 250;
  TrainConfig train;
  json deep_spec, wide_spec;  // parsed after the input dim is known
};

inline ImageOptions parse_image(const json& j, const std::string& name) {
  detail::check_keys(j, name,
                     {"dataset", "n_train", "n_test", "train", "deep", "wide"},
                     {"images", "labels", "batches"});
  ImageOptions o;
  o.dataset = j.at("dataset").get<std::string>();
  o.n_train = j.at("n_train").get<int>();
  o.n_test = j.at("n_test").get<int>();
  if (o.n_train < 1 || o.n_test < 1)
    throw validation_error(name + ": n_train and n_test must be positive");
  o.train = detail::parse_train(j.at("train"), name + ".train");
  o.deep_spec = j.at("deep");
  o.wide_spec = j.at("wide");
  if (o.dataset == "mnist" || o.dataset == "fashion_mnist") {
    if (!j.contains("images"))
      throw validation_error(name + ": missing required field \"images\"");
    if (!j.contains("labels"))
      throw validation_error(name + ": missing required field \"labels\"");
    o.images = j.at("images").get<std::string>();
    o.labels = j.at("labels").get<std::string>();
    for (const auto& p : {o.images, o.labels})
      if (!std::filesystem::exists(detail::resolve_data_path(p)))
        throw validation_error(name + ": data file not found: " +
                               detail::resolve_data_path(p).string());
  } else if (o.dataset == "cifar10") {
    if (!j.contains("batches"))
      throw validation_error(name + ": missing required field \"batches\"");
    o.batches = j.at("batches").get<std::vector<std::string>>();
    if (o.batches.empty()) throw validation_error(name + ": batches list is empty");
    for (const auto& p : o.batches)
      if (!std::filesystem::exists(detail::resolve_data_path(p)))
        throw validation_error(name + ": data file not found: " +
                               detail::resolve_data_path(p).string());
  } else {
    throw validation_error(name + ": unknown dataset \"" + o.dataset +
                           "\" (expected mnist|fashion_mnist|cifar10)");
  }
  return o;
}

inline Dataset load_image_dataset(const ImageOptions& o, int limit) {
  if (o.dataset == "cifar10") {
    std::vector<std::string> paths;
    for (const auto& p : o.batches)
      paths.push_back(detail::resolve_data_path(p).string());
    return load_cifar10(paths, limit);
  }
  return load_idx(detail::resolve_data_path(o.images).string(),
                  detail::resolve_data_path(o.labels).string(), limit);
}

inline ExperimentOutput run_image_regression(const ExperimentSpec& spec) {
  ImageOptions o = parse_image(spec.section, "image_regression");
  const Dataset pool = load_image_dataset(o, o.n_train + o.n_test);
  json warnings = json::array();
  int n_train = o.n_train, n_test = o.n_test;
  if (pool.size() < o.n_train + o.n_test) {
    warnings.push_back("requested " + std::to_string(o.n_train + o.n_test) +
                       " samples but only " + std::to_string(pool.size()) +
                       " available; halving the available set");
    n_train = int(pool.size() / 2);
    n_test = int(pool.size()) - n_train;
  }
  const int d = int(pool.dim());
  const NetworkConfig deep = detail::parse_network(o.deep_spec, "image_regression.deep", d, 10);
  const NetworkConfig wide = detail::parse_network(o.wide_spec, "image_regression.wide", d, 10);

  struct Row {
    double acc0_d, acc1_d, acc0_w, acc1_w;
  };
  std::vector<Row> rows(size_t(spec.trials));

  detail::run_indexed(spec.trials, spec.jobs, [&](int t) {
    const std::uint64_t s = spec.seed + std::uint64_t(t);
    auto [train_set, test_set] = split_dataset(pool, n_train, detail::mix_seed(s, 17));

    auto run_kernel = [&](const NetworkConfig& cfg, KernelKind kind, double& acc0,
                          double& acc1) {
      Network net = init_network(cfg, detail::mix_seed(s, kind == KernelKind::depth_induced ? 1 : 2));
      auto accuracy = [&](const Network& n) {
        const Eigen::MatrixXd mu = kernel_regression_mean(n, kind, train_set, test_set);
        RegressionResult rr;
        rr.mean = mu;
        return classify(rr, test_set.y.transpose()).accuracy;
      };
      acc0 = accuracy(net);
      TrainConfig tc = o.train;
      tc.seed = detail::mix_seed(s, 3, kind == KernelKind::depth_induced ? 1 : 2);
      net = train(std::move(net), train_set.x, train_set.y, tc).network;
      acc1 = accuracy(net);
    };
    run_kernel(deep, KernelKind::depth_induced, rows[size_t(t)].acc0_d, rows[size_t(t)].acc1_d);
    run_kernel(wide, KernelKind::width_induced, rows[size_t(t)].acc0_w, rows[size_t(t)].acc1_w);
  });

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "trial,kernel,epoch,accuracy\n";
  std::vector<double> a0d, a1d, a0w, a1w;
  for (int t = 0; t < spec.trials; ++t) {
    const Row& r = rows[size_t(t)];
    csv << t << ",ntk_d,0," << format_g17(r.acc0_d) << '\n';
    csv << t << ",ntk_d," << o.train.epochs << ',' << format_g17(r.acc1_d) << '\n';
    csv << t << ",ntk_w,0," << format_g17(r.acc0_w) << '\n';
    csv << t << ",ntk_w," << o.train.epochs << ',' << format_g17(r.acc1_w) << '\n';
    a0d.push_back(r.acc0_d);
    a1d.push_back(r.acc1_d);
    a0w.push_back(r.acc0_w);
    a1w.push_back(r.acc1_w);
  }
  out.results_csv = csv.str();
  out.summary = json{
      {"experiment", "image_regression"},
      {"dataset", o.dataset},
      {"n_train", n_train},
      {"n_test", n_test},
      {"accuracy",
       {{"ntk_d", {{"initial", {{"mean", mean(a0d)}, {"std", stddev(a0d)}}},
                   {"trained", {{"mean", mean(a1d)}, {"std", stddev(a1d)}}}}},
        {"ntk_w", {{"initial", {{"mean", mean(a0w)}, {"std", stddev(a0w)}}},
                   {"trained", {{"mean", mean(a1w)}, {"std", stddev(a1w)}}}}}}},
      {"warnings", warnings}};
  return out;
}

struct SweepOptions {
  std::string dataset;
  std::string images, labels;
  std::vector<std::string> batches;
  int n_samples = 500;
  std::vector<int> k_values, separation_values;
  std::vector<int> epoch_checkpoints;
  int bins = 20;
  TrainConfig train;
  json net_spec;
};

inline SweepOptions parse_sweep(const json& j) {
  detail::check_keys(j, "hbar_k_sweep",
                     {"dataset", "n_samples", "k_values", "separation_values",
                      "epoch_checkpoints", "bins", "train", "net"},
                     {"images", "labels", "batches"});
  SweepOptions o;
  o.dataset = j.at("dataset").get<std::string>();
  o.n_samples = j.at("n_samples").get<int>();
  o.k_values = j.at("k_values").get<std::vector<int>>();
  o.separation_values = j.at("separation_values").get<std::vector<int>>();
  o.epoch_checkpoints = j.at("epoch_checkpoints").get<std::vector<int>>();
  o.bins = j.at("bins").get<int>();
  o.train = detail::parse_train(j.at("train"), "hbar_k_sweep.train");
  o.net_spec = j.at("net");
  if (o.k_values.empty() || o.separation_values.empty())
    throw validation_error("hbar_k_sweep: k_values and separation_values must be non-empty");
  if (o.bins < 1) throw validation_error("hbar_k_sweep: bins must be positive");
  if (o.epoch_checkpoints.empty())
    throw validation_error("hbar_k_sweep: epoch_checkpoints is empty");
  detail::parse_network(o.net_spec, "hbar_k_sweep.net", 1, 1);  // eager validation
  if (o.dataset == "mnist" || o.dataset == "fashion_mnist") {
    if (!j.contains("images") || !j.contains("labels"))
      throw validation_error("hbar_k_sweep: missing required field \"images\"/\"labels\"");
    o.images = j.at("images").get<std::string>();
    o.labels = j.at("labels").get<std::string>();
    for (const auto& p : {o.images, o.labels})
      if (!std::filesystem::exists(detail::resolve_data_path(p)))
        throw validation_error("hbar_k_sweep: data file not found: " +
                               detail::resolve_data_path(p).string());
  } else if (o.dataset == "cifar10") {
    if (!j.contains("batches"))
      throw validation_error("hbar_k_sweep: missing required field \"batches\"");
    o.batches = j.at("batches").get<std::vector<std::string>>();
    for (const auto& p : o.batches)
      if (!std::filesystem::exists(detail::resolve_data_path(p)))
        throw validation_error("hbar_k_sweep: data file not found: " +
                               detail::resolve_data_path(p).string());
  } else {
    throw validation_error("hbar_k_sweep: unknown dataset \"" + o.dataset + "\"");
  }
  return o;
}

inline ExperimentOutput run_hbar_k_sweep(const ExperimentSpec& spec) {
  const SweepOptions o = parse_sweep(spec.section);
  ImageOptions img;
  img.dataset = o.dataset;
  img.images = o.images;
  img.labels = o.labels;
  img.batches = o.batches;
  const Dataset pool = load_image_dataset(img, o.n_samples);
  const int d = int(pool.dim());

  struct Cell {  // one (separation, K, trial) worth of angle histograms
    std::vector<std::vector<int>> hist_per_checkpoint;
    std::vector<double> mean_angle;
  };
  const int combos = int(o.k_values.size() * o.separation_values.size());
  std::vector<Cell> cells(size_t(combos) * spec.trials);

  detail::run_indexed(combos * spec.trials, spec.jobs, [&](int idx) {
    const int t = idx % spec.trials;
    const int combo = idx / spec.trials;
    const int k = o.k_values[size_t(combo) % o.k_values.size()];
    const int sep = o.separation_values[size_t(combo) / o.k_values.size()];
    const NetworkConfig base = detail::parse_network(o.net_spec, "hbar_k_sweep.net", d, 10);
    NetworkConfig cfg = NetworkConfig::uniform(d, 10, sep, k, base.widths[0]);
    cfg.activation = base.activation;
    cfg.apply_layer_scaling = base.apply_layer_scaling;
    cfg.weight_std = base.weight_std;
    cfg.bias_std = base.bias_std;
    cfg.use_bias = base.use_bias;

    const std::uint64_t s = detail::mix_seed(spec.seed, std::uint64_t(combo), std::uint64_t(t));
    Network net = init_network(cfg, s);
    Cell& cell = cells[size_t(idx)];
    int trained_to = 0;
    for (int cp : o.epoch_checkpoints) {
      if (cp > trained_to) {
        TrainConfig tc = o.train;
        tc.epochs = cp - trained_to;
        tc.seed = detail::mix_seed(s, 5, std::uint64_t(trained_to));
        net = train(std::move(net), pool.x, pool.y, tc).network;
        trained_to = cp;
      }
      const GramMatrix g = gram(net, KernelKind::depth_induced, pool.columns());
      const AngleStats st = angle_stats(g, o.bins);
      cell.hist_per_checkpoint.push_back(st.histogram);
      cell.mean_angle.push_back(mean(st.angles));
    }
  });

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "separation,shortcuts,trial,epoch,bin_low,bin_high,count\n";
  json summary_rows = json::array();
  const double half_pi = std::numbers::pi / 2;
  for (int combo = 0; combo < combos; ++combo) {
    const int k = o.k_values[size_t(combo) % o.k_values.size()];
    const int sep = o.separation_values[size_t(combo) / o.k_values.size()];
    for (int t = 0; t < spec.trials; ++t) {
      const Cell& cell = cells[size_t(combo) * spec.trials + size_t(t)];
      for (size_t ci = 0; ci < o.epoch_checkpoints.size(); ++ci) {
        for (int b = 0; b < o.bins; ++b)
          csv << sep << ',' << k << ',' << t << ',' << o.epoch_checkpoints[ci] << ','
              << format_g17(half_pi * b / o.bins) << ','
              << format_g17(half_pi * (b + 1) / o.bins) << ','
              << cell.hist_per_checkpoint[ci][size_t(b)] << '\n';
      }
    }
    for (size_t ci = 0; ci < o.epoch_checkpoints.size(); ++ci) {
      std::vector<double> angles;
      for (int t = 0; t < spec.trials; ++t)
        angles.push_back(cells[size_t(combo) * spec.trials + size_t(t)].mean_angle[ci]);
      summary_rows.push_back(json{{"separation", sep},
                                  {"shortcuts", k},
                                  {"epoch", o.epoch_checkpoints[ci]},
                                  {"mean_angle", mean(angles)},
                                  {"std_angle", stddev(angles)}});
    }
  }
  out.results_csv = csv.str();
  out.summary = json{{"experiment", "hbar_k_sweep"},
                     {"mean_angles", summary_rows},
                     {"warnings", json::array()}};
  return out;
}

struct LambdaMinOptions {
  std::vector<int> d_values;
  int n_samples = 100;
  std::string sampler = "gaussian";
  TrainConfig train;
  json net_spec;
};

inline LambdaMinOptions parse_lambda_min(const json& j) {
  detail::check_keys(j, "lambda_min_scaling",
                     {"d_values", "n_samples", "train", "net"}, {"sampler"});
  LambdaMinOptions o;
  o.d_values = j.at("d_values").get<std::vector<int>>();
  o.n_samples = j.at("n_samples").get<int>();
  o.sampler = j.value("sampler", "gaussian");
  if (o.d_values.empty()) throw validation_error("lambda_min_scaling: d_values is empty");
  if (o.n_samples < 1) throw validation_error("lambda_min_scaling: n_samples must be positive");
  if (o.sampler != "gaussian" && o.sampler != "sphere")
    throw validation_error("lambda_min_scaling: sampler must be gaussian or sphere");
  o.train = detail::parse_train(j.at("train"), "lambda_min_scaling.train");
  o.net_spec = j.at("net");
  return o;
}

inline ExperimentOutput run_lambda_min_scaling(const ExperimentSpec& spec) {
  const LambdaMinOptions o = parse_lambda_min(spec.section);
  const NetworkConfig tmpl = detail::parse_network(o.net_spec, "lambda_min_scaling.net", 1, 1);
  const ScalingTable table = lambda_min_scaling_experiment(
      o.d_values, o.n_samples, spec.trials, tmpl, spec.seed, o.train,
      o.sampler == "gaussian" ? ScaledVariant::gaussian : ScaledVariant::sphere);

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "d,mean_lambda_min,std_lambda_min\n";
  int violations = 0;
  for (const auto& row : table.rows) {
    csv << row.d << ',' << format_g17(row.mean_lambda_min) << ','
        << format_g17(row.std_lambda_min) << '\n';
    violations += row.psd_violations;
  }
  out.results_csv = csv.str();
  out.summary = json{{"experiment", "lambda_min_scaling"},
                     {"fit",
                      {{"slope", table.fit.slope},
                       {"intercept", table.fit.intercept},
                       {"pearson_r", table.fit.pearson_r},
                       {"defined", table.fit.defined}}},
                     {"psd_violations", violations},
                     {"warnings", table.fit.defined
                                      ? json::array()
                                      : json::array({"fit undefined: need at least "
                                                     "two distinct d values"})}};
  return out;
}

struct SigmaMaxOptions {
  std::vector<int> k_values;
  json net_spec;
};

inline SigmaMaxOptions parse_sigma_max(const json& j) {
  detail::check_keys(j, "sigma_max_scaling", {"k_values", "net"}, {});
  SigmaMaxOptions o;
  o.k_values = j.at("k_values").get<std::vector<int>>();
  if (o.k_values.empty()) throw validation_error("sigma_max_scaling: k_values is empty");
  o.net_spec = j.at("net");
  return o;
}

inline ExperimentOutput run_sigma_max_scaling(const ExperimentSpec& spec) {
  const SigmaMaxOptions o = parse_sigma_max(spec.section);
  const NetworkConfig base = detail::parse_network(o.net_spec, "sigma_max_scaling.net", 2, 1);
  Eigen::VectorXd x(2), xp(2);
  x << 0.0, 1.0;
  xp << 1.0, 0.0;

  struct Cell {
    std::vector<double> sig;
    double bound = 0.0;
    int violations = 0;
  };
  std::vector<Cell> cells(o.k_values.size());
  detail::run_indexed(int(o.k_values.size()), spec.jobs, [&](int ki) {
    const int k = o.k_values[size_t(ki)];
    NetworkConfig cfg = NetworkConfig::uniform(2, base.output_dim, base.separation,
                                               k, base.widths[0]);
    cfg.activation = base.activation;
    cfg.apply_layer_scaling = base.apply_layer_scaling;
    cfg.weight_std = base.weight_std;
    cfg.bias_std = base.bias_std;
    cfg.use_bias = base.use_bias;
    Cell& cell = cells[size_t(ki)];
    for (int t = 0; t < spec.trials; ++t) {
      const Network net = init_network(cfg, detail::mix_seed(spec.seed, std::uint64_t(ki), std::uint64_t(t)));
      const Theorem3Check c = check_theorem3(net, x, xp);
      cell.sig.push_back(c.sigma_max);
      cell.bound = c.bound;
      if (!c.holds) ++cell.violations;
    }
  });

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "K,mean_sigma_max,std_sigma_max,theorem3_bound\n";
  int violations = 0;
  for (size_t ki = 0; ki < o.k_values.size(); ++ki) {
    csv << o.k_values[ki] << ',' << format_g17(mean(cells[ki].sig)) << ','
        << format_g17(stddev(cells[ki].sig)) << ',' << format_g17(cells[ki].bound)
        << '\n';
    violations += cells[ki].violations;
  }
  out.results_csv = csv.str();
  out.summary = json{{"experiment", "sigma_max_scaling"},
                     {"bound_violations", violations},
                     {"warnings", json::array()}};
  return out;
}

struct InvarianceOptions {
  std::vector<int> k_values;
  int separation = 3;
  int n_train = 100;
  int probe_count = 64;
  TrainConfig train;
  ActivationSpec activation = ActivationSpec::tanh();
  double weight_std = 1.0, bias_std = 1.0;
  bool layer_scaling = true;
};

inline InvarianceOptions parse_invariance(const json& j) {
  detail::check_keys(j, "invariance",
                     {"k_values", "separation", "n_train", "probe_count", "train",
                      "activation", "weight_std", "bias_std", "layer_scaling"},
                     {"leaky_slope"});
  InvarianceOptions o;
  o.k_values = j.at("k_values").get<std::vector<int>>();
  o.separation = j.at("separation").get<int>();
  o.n_train = j.at("n_train").get<int>();
  o.probe_count = j.at("probe_count").get<int>();
  o.train = detail::parse_train(j.at("train"), "invariance.train");
  o.activation = detail::parse_activation(j, "invariance");
  o.weight_std = j.at("weight_std").get<double>();
  o.bias_std = j.at("bias_std").get<double>();
  o.layer_scaling = j.at("layer_scaling").get<bool>();
  if (o.k_values.empty()) throw validation_error("invariance: k_values is empty");
  if (o.probe_count < 1) throw validation_error("invariance: probe_count must be positive");
  return o;
}

// Drift of the depth kernel between initialization and the end of training,
// probed against a fixed point for a grid of circle positions; hidden width
// is tied to the shortcut count as width = K^2.
inline ExperimentOutput run_invariance(const ExperimentSpec& spec) {
  const InvarianceOptions o = parse_invariance(spec.section);

  Eigen::VectorXd fixed(2);
  fixed << 1.0, 0.0;
  std::vector<double> gammas(size_t(o.probe_count));
  std::vector<ProbePair> probes;
  for (int i = 0; i < o.probe_count; ++i) {
    const double g = o.probe_count == 1
                         ? 0.0
                         : -std::numbers::pi +
                               2.0 * std::numbers::pi * i / (o.probe_count - 1);
    gammas[size_t(i)] = g;
    Eigen::VectorXd p(2);
    p << std::cos(g), std::sin(g);
    probes.emplace_back(fixed, p);
  }

  struct Cell {
    Eigen::VectorXd drift;  // per probe
  };
  std::vector<Cell> cells(o.k_values.size() * size_t(spec.trials));
  detail::run_indexed(int(cells.size()), spec.jobs, [&](int idx) {
    const int t = idx % spec.trials;
    const size_t ki = size_t(idx) / spec.trials;
    const int k = o.k_values[ki];
    NetworkConfig cfg = NetworkConfig::uniform(2, 1, o.separation, k, k * k);
    cfg.activation = o.activation;
    cfg.apply_layer_scaling = o.layer_scaling;
    cfg.weight_std = o.weight_std;
    cfg.bias_std = o.bias_std;
    cfg.use_bias = o.bias_std > 0.0;
    const std::uint64_t s = detail::mix_seed(spec.seed, ki, std::uint64_t(t));
    const Network net = init_network(cfg, s);
    const Dataset data = gen_circle(o.n_train, detail::mix_seed(s, 7));
    TrainConfig tc = o.train;
    tc.seed = detail::mix_seed(s, 11);
    const auto records =
        track_invariance(net, tc, data.x, data.y, probes, {o.train.epochs});
    cells[size_t(idx)].drift = records.back().drift;
  });

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "K,gamma,mean_drift,std_drift\n";
  json per_k = json::array();
  for (size_t ki = 0; ki < o.k_values.size(); ++ki) {
    std::vector<double> all_means;
    for (int i = 0; i < o.probe_count; ++i) {
      std::vector<double> vals;
      for (int t = 0; t < spec.trials; ++t)
        vals.push_back(cells[ki * size_t(spec.trials) + size_t(t)].drift(i));
      csv << o.k_values[ki] << ',' << format_g17(gammas[size_t(i)]) << ','
          << format_g17(mean(vals)) << ',' << format_g17(stddev(vals)) << '\n';
    }
    for (int t = 0; t < spec.trials; ++t)
      all_means.push_back(cells[ki * size_t(spec.trials) + size_t(t)].drift.mean());
    per_k.push_back(json{{"K", o.k_values[ki]},
                         {"mean_drift", mean(all_means)},
                         {"std_drift", stddev(all_means)}});
  }
  out.results_csv = csv.str();
  out.summary = json{{"experiment", "invariance"},
                     {"drift_per_k", per_k},
                     {"warnings", json::array()}};
  return out;
}

struct GaussianityOptions {
  std::vector<int> k_values;
  int width = 32;
  int separation = 2;
  int repetitions = 5;
  int probe_dim = 8;
  std::uint64_t probe_seed = 12345;
  ActivationSpec activation = ActivationSpec::tanh();
  double weight_std = 0.0, bias_std = 0.0;
  bool layer_scaling = false;
};

inline GaussianityOptions parse_gaussianity(const json& j) {
  detail::check_keys(j, "gaussianity",
                     {"k_values", "width", "separation", "repetitions", "probe_dim",
                      "activation", "weight_std", "bias_std", "layer_scaling"},
                     {"leaky_slope", "probe_seed"});
  GaussianityOptions o;
  o.k_values = j.at("k_values").get<std::vector<int>>();
  o.width = j.at("width").get<int>();
  o.separation = j.at("separation").get<int>();
  o.repetitions = j.at("repetitions").get<int>();
  o.probe_dim = j.at("probe_dim").get<int>();
  o.probe_seed = j.value("probe_seed", 12345);
  o.activation = detail::parse_activation(j, "gaussianity");
  o.weight_std = j.at("weight_std").get<double>();
  o.bias_std = j.at("bias_std").get<double>();
  o.layer_scaling = j.at("layer_scaling").get<bool>();
  if (o.k_values.empty()) throw validation_error("gaussianity: k_values is empty");
  if (o.repetitions < 1) throw validation_error("gaussianity: repetitions must be positive");
  return o;
}

struct GaussianityCell {
  MomentStats stats;
  double ks = 0.0;
};

// Distribution of the depth-kernel trace on one fixed input pair across
// independent initializations, per shortcut count.
inline ExperimentOutput run_gaussianity(const ExperimentSpec& spec) {
  const GaussianityOptions o = parse_gaussianity(spec.section);

  std::mt19937_64 probe_rng(o.probe_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd x(o.probe_dim), xp(o.probe_dim);
  for (int i = 0; i < o.probe_dim; ++i) x(i) = normal(probe_rng);
  for (int i = 0; i < o.probe_dim; ++i) xp(i) = normal(probe_rng);

  std::vector<GaussianityCell> cells(o.k_values.size() * size_t(o.repetitions));
  detail::run_indexed(int(cells.size()), spec.jobs, [&](int idx) {
    const int rep = idx % o.repetitions;
    const size_t ki = size_t(idx) / o.repetitions;
    NetworkConfig cfg = NetworkConfig::uniform(o.probe_dim, 1, o.separation,
                                               o.k_values[ki], o.width);
    cfg.activation = o.activation;
    cfg.apply_layer_scaling = o.layer_scaling;
    cfg.weight_std = o.weight_std;
    cfg.bias_std = o.bias_std;
    cfg.use_bias = o.bias_std > 0.0;
    std::vector<double> values(size_t(spec.trials));
    for (int i = 0; i < spec.trials; ++i) {
      const Network net = init_network(
          cfg, detail::mix_seed(spec.seed + std::uint64_t(rep) * 1000003u, ki,
                                std::uint64_t(i)));
      const ForwardTrace ta = forward(net, x);
      const ForwardTrace tb = forward(net, xp);
      values[size_t(i)] = ntk_d_expanded(net, ta, tb).trace;
    }
    GaussianityCell& cell = cells[size_t(idx)];
    cell.stats = moment_stats(values);
    cell.ks = ks_statistic_vs_fitted_normal(values);
  });

  ExperimentOutput out;
  std::ostringstream csv;
  csv << "K,repetition,skewness,excess_kurtosis,ks_statistic,defined\n";
  json per_k = json::array();
  for (size_t ki = 0; ki < o.k_values.size(); ++ki) {
    std::vector<double> skews, kurts;
    for (int rep = 0; rep < o.repetitions; ++rep) {
      const GaussianityCell& c = cells[ki * size_t(o.repetitions) + size_t(rep)];
      csv << o.k_values[ki] << ',' << rep << ',' << format_g17(c.stats.skewness)
          << ',' << format_g17(c.stats.excess_kurtosis) << ',' << format_g17(c.ks)
          << ',' << (c.stats.defined ? 1 : 0) << '\n';
      if (c.stats.defined) {
        skews.push_back(std::abs(c.stats.skewness));
        kurts.push_back(std::abs(c.stats.excess_kurtosis));
      }
    }
    per_k.push_back(json{{"K", o.k_values[ki]},
                         {"median_abs_skewness", median(skews)},
                         {"median_abs_excess_kurtosis", median(kurts)},
                         {"defined_repetitions", skews.size()}});
  }
  out.results_csv = csv.str();
  json warnings = json::array();
  if (spec.trials < 30)
    warnings.push_back("fewer than 30 initializations per repetition; "
                       "normality statistics are unreliable");
  out.summary = json{{"experiment", "gaussianity"},
                     {"per_k", per_k},
                     {"warnings", warnings}};
  return out;
}

}  // namespace experiments

inline ExperimentSpec parse_experiment_spec_impl(const json& root) {
  detail::check_keys(root, "spec",
                     {"experiment", "seed", "trials", "output_dir"},
                     {"jobs", "sine", "image_regression", "hbar_k_sweep",
                      "lambda_min_scaling", "sigma_max_scaling", "invariance",
                      "gaussianity"});
  ExperimentSpec spec;
  spec.experiment = root.at("experiment").get<std::string>();
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), spec.experiment) == names.end()) {
    std::string all;
    for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
    throw validation_error("unknown experiment \"" + spec.experiment +
                           "\"; valid names: " + all);
  }
  spec.seed = root.at("seed").get<std::uint64_t>();
  spec.trials = root.at("trials").get<int>();
  if (spec.trials < 1) throw validation_error("spec: trials must be >= 1");
  spec.jobs = root.value("jobs", 1);
  if (spec.jobs < 1) throw validation_error("spec: jobs must be >= 1");
  spec.output_dir = root.at("output_dir").get<std::string>();
  if (!root.contains(spec.experiment))
    throw validation_error("spec: missing section \"" + spec.experiment + "\"");
  for (const auto& n : names)
    if (n != spec.experiment && root.contains(n))
      throw validation_error("spec: section \"" + n +
                             "\" does not match experiment \"" + spec.experiment + "\"");
  spec.section = root.at(spec.experiment);
  spec.resolved = root;
  spec.resolved["jobs"] = spec.jobs;
  return spec;
}

inline ExperimentSpec parse_experiment_spec(const json& root) {
  ExperimentSpec spec = parse_experiment_spec_impl(root);
  // validate the section eagerly so a bad spec fails before any work
  if (spec.experiment == "sine") experiments::parse_sine(spec.section);
  else if (spec.experiment == "image_regression") experiments::parse_image(spec.section, "image_regression");
  else if (spec.experiment == "hbar_k_sweep") experiments::parse_sweep(spec.section);
  else if (spec.experiment == "lambda_min_scaling") experiments::parse_lambda_min(spec.section);
  else if (spec.experiment == "sigma_max_scaling") experiments::parse_sigma_max(spec.section);
  else if (spec.experiment == "invariance") experiments::parse_invariance(spec.section);
  else if (spec.experiment == "gaussianity") experiments::parse_gaussianity(spec.section);
  return spec;
}

inline ExperimentOutput run_experiment(const ExperimentSpec& spec) {
  if (spec.experiment == "sine") return experiments::run_sine(spec);
  if (spec.experiment == "image_regression") return experiments::run_image_regression(spec);
  if (spec.experiment == "hbar_k_sweep") return experiments::run_hbar_k_sweep(spec);
  if (spec.experiment == "lambda_min_scaling") return experiments::run_lambda_min_scaling(spec);
  if (spec.experiment == "sigma_max_scaling") return experiments::run_sigma_max_scaling(spec);
  if (spec.experiment == "invariance") return experiments::run_invariance(spec);
  return experiments::run_gaussianity(spec);
}

// Executes a spec file end to end: parse, validate, run, write results.csv,
// summary.json and spec_echo.json.  Returns the process exit code
// (0 success, 2 validation failure, 3 numeric failure).
inline int run_experiment_file(const std::filesystem::path& path, int jobs_override = -1,
                               std::optional<std::uint64_t> seed_override = {},
                               std::ostream* log = nullptr) {
  auto say = [&](const std::string& s) {
    if (log) (*log) << s << '\n';
  };
  try {
    ExperimentSpec spec = load_experiment_spec(path);
    if (jobs_override > 0) {
      spec.jobs = jobs_override;
      spec.resolved["jobs"] = jobs_override;
    }
    if (seed_override) {
      spec.seed = *seed_override;
      spec.resolved["seed"] = *seed_override;
    }
    std::filesystem::create_directories(spec.output_dir);
    const ExperimentOutput out = run_experiment(spec);
    write_text_file(spec.output_dir / "results.csv", out.results_csv);
    write_text_file(spec.output_dir / "summary.json", out.summary.dump(2) + "\n");
    write_text_file(spec.output_dir / "spec_echo.json", spec.resolved.dump(2) + "\n");
    for (const auto& [name, body] : out.extra_files)
      write_text_file(spec.output_dir / name, body);
    say("wrote " + (spec.output_dir / "results.csv").string());
    return 0;
  } catch (const validation_error& e) {
    say(std::string("validation error: ") + e.what());
    return 2;
  } catch (const config_error& e) {
    say(std::string("validation error: ") + e.what());
    return 2;
  } catch (const format_error& e) {
    say(std::string("validation error: ") + e.what());
    return 2;
  } catch (const numeric_error& e) {
    say(std::string("numeric error: ") + e.what());
    return 3;
  } catch (const iteration_limit_error& e) {
    say(std::string("numeric error: ") + e.what());
    return 3;
  }
}

}  // namespace ntkd
