#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "eldm/cli/archive.hpp"
#include "eldm/cli/config.hpp"
#include "eldm/eldm.hpp"

namespace eldm::cli {

namespace fs = std::filesystem;

struct Dataset {
  StateMatrix state;
  std::string source;
  std::string sha256;
};

struct LongRow {
  std::string variable;
  std::string quantity;
  double value;
};

struct TaskOutcome {
  std::string name;
  std::string type;
  std::string status = "pending";
  std::vector<std::string> outputs;
  json summary = json::object();
  double seconds = 0.0;
};

struct RunResult {
  std::vector<TaskOutcome> tasks;
  fs::path manifest;
};

namespace detail {

inline std::string num(double v) { return fmt::format("{}", v); }

inline std::vector<std::string> numbered(const std::string& prefix, Index n, Index first = 1) {
  std::vector<std::string> out;
  for (Index j = 0; j < n; ++j) out.push_back(fmt::format("{}{}", prefix, j + first));
  return out;
}

inline std::vector<std::string> row_ids(const StateMatrix& s) {
  if (!s.row_ids().empty()) return s.row_ids();
  std::vector<std::string> ids;
  for (Index i = 0; i < s.rows(); ++i) ids.push_back(std::to_string(i));
  return ids;
}

inline std::vector<std::string> index_ids(Index n, Index first = 0) {
  std::vector<std::string> ids;
  for (Index i = 0; i < n; ++i) ids.push_back(std::to_string(i + first));
  return ids;
}

class Writer {
 public:
  Writer(fs::path dir, TaskOutcome& outcome) : dir_(std::move(dir)), outcome_(outcome) {}

  fs::path path(const std::string& file) {
    outcome_.outputs.push_back(file);
    return dir_ / file;
  }

  std::ofstream open(const std::string& file) {
    std::ofstream out(path(file), std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + (dir_ / file).string() + "'");
    return out;
  }

  /// First column holds string keys, the rest the matrix.
  void table(const std::string& file, const std::string& key, const std::vector<std::string>& keys,
             const std::vector<std::string>& header, const Matrix& m) {
    auto out = open(file);
    out << key;
    for (const auto& h : header) out << ',' << h;
    out << '\n';
    for (Index i = 0; i < m.rows(); ++i) {
      out << keys[static_cast<std::size_t>(i)];
      for (Index j = 0; j < m.cols(); ++j) out << ',' << num(m(i, j));
      out << '\n';
    }
  }

  void long_table(const std::string& file, const std::vector<LongRow>& rows) {
    auto out = open(file);
    out << "variable,quantity,value\n";
    for (const auto& r : rows) out << r.variable << ',' << r.quantity << ',' << num(r.value) << '\n';
  }

  void series(const std::string& file, const std::string& index, const std::string& value, const std::vector<double>& v) {
    auto out = open(file);
    out << index << ',' << value << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) out << i << ',' << num(v[i]) << '\n';
  }

  void labels(const std::string& file, const std::vector<std::string>& ids, const Labels& labels,
              const Matrix* errors = nullptr) {
    auto out = open(file);
    out << "row,cluster";
    if (errors != nullptr) {
      for (Index c = 0; c < errors->cols(); ++c) out << ",error_" << c;
    }
    out << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out << ids[i] << ',' << labels[i];
      if (errors != nullptr) {
        for (Index c = 0; c < errors->cols(); ++c) out << ',' << num((*errors)(static_cast<Index>(i), c));
      }
      out << '\n';
    }
  }

  void model(const std::string& file, const ModelArchive& a) { save_model(a, path(file)); }

 private:
  fs::path dir_;
  TaskOutcome& outcome_;
};

inline std::vector<LongRow> error_rows(const std::vector<std::string>& names, const ReconstructionReport& r) {
  std::vector<LongRow> rows;
  for (std::size_t j = 0; j < names.size(); ++j) {
    rows.push_back({names[j], "r2", r.r2(static_cast<Index>(j))});
    rows.push_back({names[j], "nrmse", r.nrmse(static_cast<Index>(j))});
  }
  rows.push_back({"all", "r2_mean", r.r2_summary.mean});
  rows.push_back({"all", "r2_min", r.r2_summary.min});
  rows.push_back({"all", "r2_max", r.r2_summary.max});
  rows.push_back({"all", "nrmse_mean", r.nrmse_summary.mean});
  rows.push_back({"all", "nrmse_min", r.nrmse_summary.min});
  rows.push_back({"all", "nrmse_max", r.nrmse_summary.max});
  return rows;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::vector<LongRow> cluster_rows(const Matrix& xt, const LocalPartition& p) {
  const Matrix e = local_errors(xt, p);
  const auto sizes = cluster_sizes(p.labels, p.k());
  std::vector<double> sum(static_cast<std::size_t>(p.k()), 0.0);
  for (std::size_t i = 0; i < p.labels.size(); ++i) sum[static_cast<std::size_t>(p.labels[i])] += e(static_cast<Index>(i), p.labels[i]);
  std::vector<LongRow> rows;
  for (Index c = 0; c < p.k(); ++c) {
    const auto n = sizes[static_cast<std::size_t>(c)];
    const std::string name = fmt::format("cluster_{}", c);
    rows.push_back({name, "size", static_cast<double>(n)});
    rows.push_back({name, "mean_error", n > 0 ? sum[static_cast<std::size_t>(c)] / static_cast<double>(n) : 0.0});
  }
  return rows;
}

/// Numeric table with an optional leading "row" identifier column.
inline Matrix read_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string header;
  std::getline(in, header);
  LoadOptions opt;
  if (header.rfind("row,", 0) == 0) opt.row_id_column = "row";
  in.clear();
  in.seekg(0);
  return load_state_matrix(in, {}, opt).values();
}

inline StateMatrix read_table(const fs::path& path, const Schema& schema, const LoadOptions& opt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return load_state_matrix(in, schema, opt);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// Reorders the columns of `t` to match `names`.
inline Matrix columns_like(const StateMatrix& t, const std::vector<std::string>& names, const std::string& what) {
  Matrix out(t.rows(), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto idx = t.find(names[j]);
    if (!idx) throw DataError(what + " is missing column '" + names[j] + "'");
    out.col(static_cast<Index>(j)) = t.values().col(*idx);
  }
  return out;
}

class Runner {
 public:
  explicit Runner(const PipelineConfig& cfg) : cfg_(cfg), dir_(cfg.output_dir) {}

  RunResult run() {
    const auto start = std::chrono::steady_clock::now();
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw DataError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    fs::remove(dir_ / "FAILED", ec);

    RunResult result;
    std::size_t index = 0;
    bool loaded = false;
    try {
      if (cfg_.input) load_input();
      loaded = true;
      for (; index < cfg_.tasks.size(); ++index) {
        const auto& task = cfg_.tasks[index];
        TaskOutcome outcome;
        outcome.name = task.name;
        outcome.type = task.type;
        const auto t0 = std::chrono::steady_clock::now();
        logger()->info("task {} ({}) started", index, task.type);
        result.tasks.push_back(std::move(outcome));
        run_task(task, result.tasks.back());
        result.tasks.back().seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.tasks.back().status = "ok";
        if (std::find(cfg_.report_formats.begin(), cfg_.report_formats.end(), "json") != cfg_.report_formats.end()) {
          write_summary(result.tasks.back());
          result.tasks.back().outputs.push_back(result.tasks.back().name + "_summary.json");
        }
      }
    } catch (const std::exception& e) {
      const std::string where = loaded && index < cfg_.tasks.size()
                                    ? fmt::format("task {} ({})", index, cfg_.tasks[index].type)
                                    : std::string("input");
      if (index < result.tasks.size()) result.tasks[index].status = "failed";
      std::ofstream marker(dir_ / "FAILED", std::ios::trunc);
      marker << where << ": " << e.what() << '\n';
      write_manifest(result, start, where + ": " + e.what());
      throw;
    }
    result.manifest = write_manifest(result, start, "");
    return result;
  }

 private:
  // -------------------------------------------------------------------------
  // shared helpers

  void load_input() {
    const auto& in = *cfg_.input;
    LoadOptions opt;
    opt.delimiter = in.delimiter;
    if (!in.row_id_column.empty()) opt.row_id_column = in.row_id_column;
    fs::path p(in.path);
    if (!fs::exists(p)) throw DataError("input file '" + in.path + "' does not exist");
    data_.emplace(Dataset{read_table(p, in.schema, opt), in.path, file_sha256(p)});
    logger()->info("loaded {} rows x {} columns from {}", data_->state.rows(), data_->state.cols(), in.path);
  }

  const StateMatrix& state(const TaskSpec& t) const {
    if (!data_) {
      throw ConfigError("task '" + t.name + "' needs data: set input.path or run a synth task before it");
    }
    return data_->state;
  }

  Preprocessor preprocessor(const StateMatrix& s) const { return fit_preprocessor(s, cfg_.scaling, cfg_.centered); }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    if (path.is_relative() && fs::exists(dir_ / path)) return dir_ / path;
    return path;
  }

  ModelArchive archive(std::uint64_t seed) const {
    ModelArchive a;
    a.seed = seed;
    a.input_fingerprint = data_ ? data_->sha256 : std::string();
    return a;
  }

  template <class T>
  static T param(const TaskSpec& t, const char* key) {
    return t.params.at(key).get<T>();
  }

  void write_summary(const TaskOutcome& o) {
    const std::string file = o.name + "_summary.json";
    std::ofstream out(dir_ / file, std::ios::trunc);
    out << json{{"task", o.name}, {"type", o.type}, {"summary", o.summary}}.dump(2) << '\n';
  }

  fs::path write_manifest(const RunResult& r, std::chrono::steady_clock::time_point start, const std::string& error) {
    json m;
    m["toolkit"] = "eldm";
    m["version"] = ELDM_VERSION;
    m["archive_format"] = fmt::format("{}.{}", archive_major, archive_minor);
    m["status"] = error.empty() ? "ok" : "failed";
    if (!error.empty()) m["error"] = error;
    m["seed"] = cfg_.seed;
    if (data_) {
      m["input"] = {{"source", data_->source}, {"sha256", data_->sha256}, {"rows", data_->state.rows()},
                    {"columns", data_->state.names()}};
    } else {
      m["input"] = nullptr;
    }
    m["config"] = cfg_.resolved;
    m["provenance"] = cfg_.provenance;
    json tasks = json::array();
    json timings = json::object();
    for (const auto& t : r.tasks) {
      tasks.push_back({{"name", t.name}, {"type", t.type}, {"status", t.status}, {"outputs", t.outputs},
                       {"summary", t.summary}});
      timings[t.name] = t.seconds;
    }
    m["tasks"] = tasks;
    timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m["timings_seconds"] = timings;
    const fs::path path = dir_ / "run_manifest.json";
    std::ofstream out(path, std::ios::trunc);
    out << m.dump(2) << '\n';
    return path;
  }

  // -------------------------------------------------------------------------
  // tasks

  void run_task(const TaskSpec& t, TaskOutcome& o) {
    Writer w(dir_, o);
    if (t.type == "pca") pca(t, o, w);
    else if (t.type == "vqpca") vqpca_task(t, o, w);
    else if (t.type == "fpca") fpca(t, o, w);
    else if (t.type == "nmf") nmf(t, o, w);
    else if (t.type == "ae") ae(t, o, w);
    else if (t.type == "rotate") rotate(t, o, w);
    else if (t.type == "procrustes") procrustes_task(t, o, w);
    else if (t.type == "gpr") gpr(t, o, w);
    else if (t.type == "classify") classify_task(t, o, w);
    else if (t.type == "synth") synth(t, o, w);
    else throw ConfigError("unknown task type '" + t.type + "'");
  }

  void pca(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const auto& s = state(t);
    const auto names = s.names();
    const Index q = param<Index>(t, "q");
    check_rank(q, s.cols(), ("task " + t.name).c_str());
    const Preprocessor pre = preprocessor(s);
    const Matrix xt = apply_preprocessor(s, pre);
    const PcaBasis b = fit_pca(xt, pre);
    const Scores z = transform(xt, b, q);
    const auto rep = report_errors(s.values(), reconstruct(z, b));
    const Vector ev = explained_variance(b);

    std::vector<LongRow> eig;
    for (Index j = 0; j < b.eigenvalues.size(); ++j) {
      const auto pc = fmt::format("PC{}", j + 1);
      eig.push_back({pc, "eigenvalue", b.eigenvalues(j)});
      eig.push_back({pc, "explained_variance_cumulative", ev(j)});
    }
    w.long_table(t.name + "_eigenvalues.csv", eig);
    w.table(t.name + "_weights.csv", "variable", names, numbered("PC", q), b.truncated(q));
    w.table(t.name + "_scores.csv", "row", row_ids(s), numbered("PC", q), z.values);
    w.long_table(t.name + "_errors.csv", error_rows(names, rep));

    const auto sources = param<std::string>(t, "sources");
    if (!sources.empty()) {
      const StateMatrix src = read_table(resolve(sources), {}, {});
      const Matrix sz = project_source_terms(columns_like(src, names, "source-term file"), b, q);
      w.table(t.name + "_pc_sources.csv", "row", row_ids(src), numbered("S_PC", q), sz);
    }
    if (param<bool>(t, "save_model")) {
      auto a = archive(cfg_.seed);
      a.add("preprocessing", pre);
      a.add(t.name, b);
      w.model(t.name + ".eldm", a);
    }
    o.summary = {{"q", q},
                 {"explained_variance", ev(q - 1)},
                 {"r2_mean", finite_or_null(rep.r2_summary.mean)},
                 {"nrmse_mean", finite_or_null(rep.nrmse_summary.mean)}};
  }

  void local_outputs(const TaskSpec& t, TaskOutcome& o, Writer& w, const StateMatrix& s, const Preprocessor& pre,
                     const Matrix& xt, const LocalPartition& p, std::uint64_t seed) {
    const auto rep = report_errors(s.values(), invert_preprocessor(local_reconstruct_scaled(xt, p), pre));
    w.labels(t.name + "_labels.csv", row_ids(s), p.labels);
    w.long_table(t.name + "_clusters.csv", cluster_rows(xt, p));
    w.long_table(t.name + "_errors.csv", error_rows(s.names(), rep));
    auto a = archive(seed);
    a.add("preprocessing", pre);
    a.add(t.name, p);
    w.model(t.name + ".eldm", a);
    o.summary["k"] = p.k();
    o.summary["q"] = p.q;
    o.summary["mean_error"] = mean_reconstruction_error(xt, p);
    o.summary["r2_mean"] = finite_or_null(rep.r2_summary.mean);
  }

  void vqpca_task(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const auto& s = state(t);
    const Preprocessor pre = preprocessor(s);
    const Matrix xt = apply_preprocessor(s, pre);
    VqpcaOptions opt;
    opt.k = param<Index>(t, "k");
    opt.q = param<Index>(t, "q");
    opt.init = parse_vqpca_init(param<std::string>(t, "init"));
    opt.seed = param<std::uint64_t>(t, "seed");
    opt.max_iter = param<int>(t, "max_iter");
    opt.tol_centroid = param<double>(t, "tol_centroid");
    opt.tol_error = param<double>(t, "tol_error");
    const auto r = vqpca(xt, opt);
    w.series(t.name + "_history.csv", "iteration", "mean_error", r.error_history);
    local_outputs(t, o, w, s, pre, xt, r.partition, opt.seed);
    o.summary["iterations"] = r.iterations;
    o.summary["converged"] = r.converged;
  }

  void fpca(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const auto& s = state(t);
    const double z_st = param<double>(t, "z_st");
    Vector z;
    const auto z_column = param<std::string>(t, "z_column");
    if (!z_column.empty()) {
      z = s.column(z_column);
    } else {
      StreamDefinition sd;
      sd.fuel_columns = param<std::vector<std::string>>(t, "fuel");
      sd.oxidizer_column = param<std::string>(t, "oxidizer");
      sd.yf_fuel_stream = param<double>(t, "fuel_stream");
      sd.yo2_ox_stream = param<double>(t, "oxidizer_stream");
      sd.nu = StreamDefinition::nu_for(z_st, sd.yf_fuel_stream, sd.yo2_ox_stream);
      z = mixture_fraction(s, sd);
    }
    const Index q = param<Index>(t, "q");
    if (q >= s.cols()) throw ConfigError("task " + t.name + ": q must be smaller than the number of variables");
    const Preprocessor pre = preprocessor(s);
    const Matrix xt = apply_preprocessor(s, pre);
    const Labels labels = fpca_partition(z, param<Index>(t, "k"), z_st, q + 1);
    const LocalPartition p = fit_local_bases(xt, labels, q);
    local_outputs(t, o, w, s, pre, xt, p, cfg_.seed);
  }

  void nmf(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const auto& s = state(t);
    const Index q = param<Index>(t, "q");
    const Preprocessor pre =
        fit_preprocessor(s.values(), cfg_.scaling, param<bool>(t, "subtract_minimum") ? Centering::minimum : Centering::none);
    const Matrix xs = apply_preprocessor(s, pre);
    const auto seed = param<std::uint64_t>(t, "seed");
    const auto f = fit_nmf(xs, q, seed, {param<int>(t, "max_iter"), param<double>(t, "tol")});
    const auto rep = report_errors(s.values(), invert_preprocessor(f.w * f.f, pre));
    w.table(t.name + "_weights.csv", "variable", s.names(), numbered("F", q), f.f.transpose());
    w.table(t.name + "_scores.csv", "row", row_ids(s), numbered("F", q), f.w);
    w.series(t.name + "_history.csv", "iteration", "residual", f.residual_history);
    w.long_table(t.name + "_errors.csv", error_rows(s.names(), rep));
    auto a = archive(seed);
    a.add("preprocessing", pre);
    a.add(t.name, f);
    w.model(t.name + ".eldm", a);
    o.summary = {{"q", q}, {"residual", f.residual_history.back()}, {"r2_mean", finite_or_null(rep.r2_summary.mean)}};
  }

  void ae(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const auto& s = state(t);
    const Preprocessor pre = preprocessor(s);
    const Matrix xt = apply_preprocessor(s, pre);
    std::vector<Index> sizes{s.cols()};
    for (auto h : param<std::vector<std::int64_t>>(t, "hidden")) sizes.push_back(h);
    sizes.push_back(s.cols());
    const auto seed = param<std::uint64_t>(t, "seed");
    auto model = init_autoencoder(sizes, parse_activation(param<std::string>(t, "activation")), seed);
    TrainOptions opt;
    opt.epochs = param<int>(t, "epochs");
    opt.learning_rate = param<double>(t, "learning_rate");
    opt.batch_size = std::min<Index>(param<Index>(t, "batch_size"), s.rows());
    opt.seed = seed;
    const auto r = train(model, xt, opt);
    const Matrix codes = encode(r.model, xt);
    const auto rep = report_errors(s.values(), invert_preprocessor(autoencode(r.model, xt), pre));
    w.table(t.name + "_codes.csv", "row", row_ids(s), numbered("code", codes.cols()), codes);
    w.series(t.name + "_history.csv", "epoch", "loss", r.loss_history);
    w.long_table(t.name + "_errors.csv", error_rows(s.names(), rep));
    auto a = archive(seed);
    a.add("preprocessing", pre);
    a.add(t.name, r.model);
    w.model(t.name + ".eldm", a);
    o.summary = {{"code_width", codes.cols()},
                 {"loss", r.loss_history.empty() ? reconstruction_loss(r.model, xt) : r.loss_history.back()},
                 {"r2_mean", finite_or_null(rep.r2_summary.mean)}};
  }

  void rotate(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const auto& s = state(t);
    const Index q = param<Index>(t, "q");
    check_rank(q, s.cols(), ("task " + t.name).c_str());
    const Preprocessor pre = preprocessor(s);
    const PcaBasis b = fit_pca(apply_preprocessor(s, pre), pre);
    VarimaxOptions opt;
    opt.kaiser = param<bool>(t, "kaiser");
    opt.max_sweeps = param<int>(t, "max_sweeps");
    opt.tol = param<double>(t, "tol");
    const auto r = varimax(b.truncated(q), opt);
    w.table(t.name + "_weights.csv", "variable", s.names(), numbered("R", q), r.rotated);
    w.table(t.name + "_rotation.csv", "mode", numbered("PC", q), numbered("R", q), r.rotation);
    w.series(t.name + "_history.csv", "sweep", "criterion", r.criterion_history);
    o.summary = {{"q", q},
                 {"criterion_before", r.criterion_history.front()},
                 {"criterion_after", r.criterion_history.back()}};
  }

  void procrustes_task(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const Matrix target = read_points(resolve(param<std::string>(t, "target")));
    const Matrix source = read_points(resolve(param<std::string>(t, "source")));
    ProcrustesOptions opt;
    opt.allow_scaling = param<bool>(t, "allow_scaling");
    opt.allow_reflection = param<bool>(t, "allow_reflection");
    const auto r = procrustes(target, source, opt);
    std::vector<LongRow> rows{{"procrustes", "dissimilarity", r.dissimilarity}, {"procrustes", "scale", r.scale}};
    for (Index j = 0; j < r.translation.size(); ++j) rows.push_back({"procrustes", fmt::format("translation_{}", j + 1), r.translation(j)});
    w.long_table(t.name + "_summary.csv", rows);
    w.table(t.name + "_rotation.csv", "axis", numbered("d", r.rotation.rows()), numbered("d", r.rotation.cols()), r.rotation);
    w.table(t.name + "_transformed.csv", "row", index_ids(r.transformed.rows()), numbered("d", r.transformed.cols()),
            r.transformed);
    o.summary = {{"dissimilarity", r.dissimilarity}, {"scale", r.scale}};
  }

  void gpr(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const auto& s = state(t);
    const Index q = param<Index>(t, "q");
    check_rank(q, s.cols(), ("task " + t.name).c_str());
    const Preprocessor pre = preprocessor(s);
    const PcaBasis b = fit_pca(apply_preprocessor(s, pre), pre);
    const Matrix inputs = transform(apply_preprocessor(s, pre), b, q).values;

    std::vector<std::string> target_names;
    Matrix targets;
    const auto sources = param<std::string>(t, "sources");
    if (!sources.empty()) {
      const StateMatrix src = read_table(resolve(sources), {}, {});
      if (src.rows() != s.rows()) throw DataError("source-term file must have one row per observation");
      targets = project_source_terms(columns_like(src, s.names(), "source-term file"), b, q);
      target_names = numbered("S_PC", q);
    } else {
      target_names = param<std::vector<std::string>>(t, "targets");
      if (target_names.empty()) target_names = s.names();
      targets = Matrix(s.rows(), static_cast<Index>(target_names.size()));
      for (std::size_t j = 0; j < target_names.size(); ++j) targets.col(static_cast<Index>(j)) = s.column(target_names[j]);
    }

    const auto seed = param<std::uint64_t>(t, "seed");
    std::vector<Index> order(static_cast<std::size_t>(s.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    auto subset = [&](Index m) {
      std::vector<Index> rows(order.begin(), order.begin() + std::min<Index>(m, s.rows()));
      std::sort(rows.begin(), rows.end());
      return rows;
    };
    const auto train_rows = subset(param<Index>(t, "max_train"));
    const auto search_rows = subset(std::min(param<Index>(t, "search_points"), static_cast<Index>(train_rows.size())));
    auto pick = [](const Matrix& m, const std::vector<Index>& rows) {
      Matrix out(static_cast<Index>(rows.size()), m.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
      return out;
    };
    const Matrix train_in = pick(inputs, train_rows);
    const Matrix search_in = pick(inputs, search_rows);
    const double fixed_ell = param<double>(t, "length_scale");
    const double fixed_s2 = param<double>(t, "signal_variance");
    const double jitter0 = param<double>(t, "jitter");

    auto a = archive(seed);
    a.add("preprocessing", pre);
    a.add(t.name + "_pca", b);
    Matrix predictions(s.rows(), targets.cols());
    std::vector<LongRow> hyper;
    for (Index j = 0; j < targets.cols(); ++j) {
      const Vector y_train = pick(targets.col(j), train_rows).col(0);
      KernelParams k;
      if (fixed_ell > 0.0) {
        k = {fixed_s2, Vector::Constant(q, fixed_ell)};
      } else {
        const auto search = select_gpr_hyperparameters(search_in, pick(targets.col(j), search_rows).col(0), jitter0);
        k = search.best;
        hyper.push_back({target_names[static_cast<std::size_t>(j)], "loo_rmse", search.best_loo_rmse});
      }
      std::optional<GprModel> model;
      double jitter = jitter0;
      for (int attempt = 0; attempt < 5 && !model; ++attempt) {
        try {
          model = fit_gpr(train_in, y_train, k, jitter);
        } catch (const NumericError&) {
          const double next = std::max(jitter * 100.0, 1e-10 * k.signal_variance);
          logger()->warn("gpr: factorization failed for '{}' with jitter {}, retrying with {}",
                         target_names[static_cast<std::size_t>(j)], jitter, next);
          jitter = next;
        }
      }
      if (!model) throw NumericError("gpr: kernel matrix for '" + target_names[static_cast<std::size_t>(j)] + "' is not positive definite");
      predictions.col(j) = predict_gpr(*model, inputs).mean;
      const auto& name = target_names[static_cast<std::size_t>(j)];
      hyper.push_back({name, "signal_variance", k.signal_variance});
      for (Index d = 0; d < q; ++d) hyper.push_back({name, fmt::format("length_scale_{}", d + 1), k.length_scales(d)});
      hyper.push_back({name, "jitter", jitter});
      a.add(name, *model);
    }
    const auto rep = report_errors(targets, predictions);
    w.long_table(t.name + "_hyperparameters.csv", hyper);
    w.long_table(t.name + "_errors.csv", error_rows(target_names, rep));
    w.table(t.name + "_predictions.csv", "row", row_ids(s), target_names, predictions);
    w.model(t.name + ".eldm", a);
    o.summary = {{"q", q},
                 {"training_points", train_rows.size()},
                 {"r2_mean", finite_or_null(rep.r2_summary.mean)},
                 {"nrmse_mean", finite_or_null(rep.nrmse_summary.mean)}};
  }

  void classify_task(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    const ModelArchive a = load_model(resolve(param<std::string>(t, "model")));
    const auto& pre = a.get<Preprocessor>();
    const auto& p = a.get<LocalPartition>();
    const auto data_path = param<std::string>(t, "data");
    std::optional<StateMatrix> own;
    if (!data_path.empty()) {
      LoadOptions opt;
      if (cfg_.input) {
        opt.delimiter = cfg_.input->delimiter;
        if (!cfg_.input->row_id_column.empty()) opt.row_id_column = cfg_.input->row_id_column;
      }
      own.emplace(read_table(resolve(data_path), cfg_.input ? cfg_.input->schema : Schema{}, opt));
    }
    const StateMatrix& s = own ? *own : state(t);
    if (s.cols() != p.dims()) {
      throw DataError(fmt::format("classify: data has {} variables, the partition expects {}", s.cols(), p.dims()));
    }
    Matrix errors;
    const Labels labels = classify_rows(s.values(), p, pre, &errors);
    w.labels(t.name + "_labels.csv", row_ids(s), labels, &errors);
    const auto sizes = cluster_sizes(labels, p.k());
    o.summary = {{"rows", s.rows()}, {"k", p.k()}, {"cluster_sizes", sizes}};
  }

  void synth(const TaskSpec& t, TaskOutcome& o, Writer& w) {
    SyntheticSpec spec;
    spec.n_points = param<Index>(t, "n_points");
    spec.z_st = param<double>(t, "z_st");
    spec.noise_level = param<double>(t, "noise_level");
    spec.time = param<double>(t, "time");
    spec.seed = param<std::uint64_t>(t, "seed");
    const auto d = generate(spec);
    const auto file = param<std::string>(t, "file");
    {
      auto out = w.open(file);
      write_state_matrix(out, d.state);
    }
    Matrix truth(d.state.rows(), 2);
    truth.col(0) = d.mixture_fraction;
    truth.col(1) = d.progress;
    w.table(t.name + "_truth.csv", "row", row_ids(d.state), {"mixture_fraction", "progress"}, truth);
    if (!data_) {
      data_.emplace(Dataset{d.state, (dir_ / file).string(), file_sha256(dir_ / file)});
      logger()->info("synthetic data from task '{}' is the pipeline input", t.name);
    }
    o.summary = {{"rows", d.state.rows()}, {"columns", d.state.names()}, {"nu", d.streams.nu}};
  }

  const PipelineConfig& cfg_;
  fs::path dir_;
  std::optional<Dataset> data_;
};

}  // namespace detail

/// Runs every task in order, writing reports, model archives and run_manifest.json
/// into the output directory. On failure a FAILED marker names the task and the
/// cause, the manifest is still written, and the exception propagates.
inline RunResult run_pipeline(const PipelineConfig& cfg) { return detail::Runner(cfg).run(); }

}  // namespace eldm::cli
