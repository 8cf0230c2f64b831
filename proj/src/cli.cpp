// Copyright 2026 The nmslope Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nmslope/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nmslope/analysis.hpp"
#include "nmslope/config.hpp"
#include "nmslope/errors.hpp"
#include "nmslope/lemma.hpp"
#include "nmslope/rng.hpp"
#include "nmslope/sparse_ops.hpp"
#include "nmslope/trainer.hpp"

namespace nmslope {

namespace {

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Output helpers

// Shortest round-trip decimal form; NaN becomes an empty cell.
std::string Num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename I>
  requires std::integral<I>
std::string Num(I v) {
  return std::to_string(v);
}

// Plot-ready CSV: header row, data rows, then "# config_hash=<hash>".
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void Add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw Error("CsvTable: row width does not match header");
    rows_.push_back(std::move(row));
  }

  void Write(const std::filesystem::path& path, const std::string& hash) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    WriteRow(out, header_);
    for (const auto& r : rows_) WriteRow(out, r);
    out << "# config_hash=" << hash << '\n';
    out.flush();
    if (!out) throw IoError("write to " + path.string() + " failed");
  }

 private:
  static void WriteRow(std::ostream& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << Quote(row[i]);
    out << '\n';
  }

  // RFC 4180 quoting for cells holding separators or quotes.
  static std::string Quote(const std::string& cell) {
    if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
    std::string q = "\"";
    for (char ch : cell) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write to " + path.string() + " failed");
}

void WriteJson(const std::filesystem::path& path, const Json& j) { WriteText(path, j.dump(2) + "\n"); }

// Wall-clock figures never go into the reproducible files; they live in
// timing.json next to them.
void WriteTiming(const std::filesystem::path& dir, const Json& j) { WriteJson(dir / "timing.json", j); }

std::filesystem::path PrepareOutput(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

std::string HashText(const std::string& canonical) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(Fnv1a64(canonical)));
  return buf;
}

double Seconds(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

NmPattern ParsePatternArg(const std::string& text) {
  try {
    return NmPattern::Parse(text);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::vector<NmPattern> ParsePatternList(const std::string& text) {
  std::vector<NmPattern> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(ParsePatternArg(item));
  if (out.empty()) throw ConfigError("empty pattern list");
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  bool seed_given = false;
};

struct TrainArgs {
  std::string config_path;
  bool checkpoint = false;
  std::int64_t log_every = 0;
};

TrainConfig ResolveConfig(const std::string& path, const Common& common) {
  TrainConfig c = LoadConfig(path);
  if (common.seed_given) c.seed = common.seed;
  c.Validate();
  return c;
}

Json SummaryJson(const TrainConfig& c, const RunReport& r, const std::string& hash) {
  Json j;
  j["config_hash"] = hash;
  j["model"] = c.model == ModelKind::kMlp ? "mlp" : "lm";
  j["seed"] = c.seed;
  j["iterations"] = c.iterations;
  j["sparse_layers"] = r.sparse_layers;
  j["average_density"] = r.average_density;
  j["final_train_loss"] = r.final_train_loss;
  j["final_validation_loss"] = r.final_validation_loss;
  j["perplexity"] = r.perplexity ? Json(*r.perplexity) : Json(nullptr);
  j["adapter_rank"] = r.adapter_rank;
  j["adapters_used"] = r.adapters_used;
  j["adapter_start"] = r.adapters_used ? Json(r.adapter_start) : Json(nullptr);
  j["adapter_switch_max_diff"] = r.adapter_switch_max_diff ? Json(*r.adapter_switch_max_diff) : Json(nullptr);
  j["control_train_loss"] = r.control_train_loss ? Json(*r.control_train_loss) : Json(nullptr);
  j["control_validation_loss"] = r.control_validation_loss ? Json(*r.control_validation_loss) : Json(nullptr);
  j["final_loss"] = r.loss.empty() ? Json(nullptr) : Json(r.loss.back());
  return j;
}

int CmdTrain(const TrainArgs& args, const Common& common, std::ostream& out) {
  const TrainConfig config = ResolveConfig(args.config_path, common);
  const auto dir = PrepareOutput(common.out_dir);
  const std::string canonical = CanonicalConfig(config);
  const std::string hash = HashText(canonical);
  WriteText(dir / "config.resolved", canonical);

  ProgressFn progress;
  if (args.log_every > 0)
    progress = [&](std::int64_t t, double loss) {
      if ((t + 1) % args.log_every == 0) out << "iteration " << t + 1 << " loss " << Num(loss) << '\n';
    };
  const RunReport r = Train(config, progress, args.checkpoint ? (dir / "checkpoint").string() : std::string());

  CsvTable table({"iteration", "loss", "lr", "adapter_cosine", "mask_diff", "mask_step_change"});
  for (std::size_t i = 0; i < r.loss.size(); ++i)
    table.Add({Num(i), Num(r.loss[i]), Num(r.lr[i]), Num(r.adapter_cosine[i]), Num(r.mask_diff[i]),
               Num(r.mask_step_change[i])});
  table.Write(dir / "loss.csv", hash);
  WriteJson(dir / "summary.json", SummaryJson(config, r, hash));
  WriteTiming(dir, {{"command", "train"}, {"wall_seconds", r.wall_seconds}});
  out << "final_validation_loss " << Num(r.final_validation_loss) << " final_train_loss "
      << Num(r.final_train_loss) << '\n';
  return kExitOk;
}

struct LemmaArgs {
  std::string patterns = "1:2,2:4,2:8,4:8";
  std::size_t trials = 200;
  std::size_t side = 512;
};

int CmdLemma(const LemmaArgs& args, const Common& common, std::ostream& out) {
  const auto patterns = ParsePatternList(args.patterns);
  if (args.trials < 2) throw ConfigError("--trials must be at least 2");
  const auto dir = PrepareOutput(common.out_dir);
  const auto started = Clock::now();
  std::ostringstream canonical;
  canonical << "verify-lemma patterns=" << args.patterns << " trials=" << args.trials << " side=" << args.side
            << " seed=" << common.seed;
  CsvTable table({"pattern", "analytic", "empirical", "standard_error", "z"});
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const auto& p = patterns[i];
    const double analytic = ImposedSparsityAnalytic(p);
    const auto mc = ImposedSparsityMonteCarlo(p, args.side, args.trials, Rng::ForStream(common.seed, i).Next());
    const double z = mc.standard_error > 0 ? (mc.mean - analytic) / mc.standard_error : 0.0;
    table.Add({p.ToString(), Num(analytic), Num(mc.mean), Num(mc.standard_error), Num(z)});
    out << p.ToString() << " analytic " << Num(analytic) << " empirical " << Num(mc.mean) << " se "
        << Num(mc.standard_error) << '\n';
  }
  table.Write(dir / "lemma.csv", HashText(canonical.str()));
  WriteTiming(dir, {{"command", "verify-lemma"}, {"wall_seconds", Seconds(started)}});
  return kExitOk;
}

struct TheoremArgs {
  std::string pattern = "2:4";
  std::size_t pairs = 10;
  std::size_t size = 64;
  std::size_t dy_rows = 1;
  std::size_t samples = 10000;
};

int CmdTheorem(const TheoremArgs& args, const Common& common, std::ostream& out) {
  const NmPattern pattern = ParsePatternArg(args.pattern);
  if (args.pairs == 0 || args.size == 0 || args.dy_rows == 0 || args.samples < 2)
    throw ConfigError("--pairs, --size, --dy-rows must be positive and --samples at least 2");
  const auto dir = PrepareOutput(common.out_dir);
  const auto started = Clock::now();
  std::ostringstream canonical;
  canonical << "verify-theorem pattern=" << args.pattern << " pairs=" << args.pairs << " size=" << args.size
            << " dy_rows=" << args.dy_rows << " samples=" << args.samples << " seed=" << common.seed;
  const std::string hash = HashText(canonical.str());

  struct Pair {
    MatrixD w, dy;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < args.pairs; ++p) {
    Rng rng = Rng::ForStream(common.seed, 2 * p);
    auto w = MatrixD::RandomNormal(args.size, args.size, rng);
    auto dy = MatrixD::RandomNormal(args.dy_rows, args.size, rng);
    pairs.push_back({std::move(w), std::move(dy)});
  }
  auto sample_seed = [&](std::size_t p, std::size_t k) { return Rng::ForStream(common.seed, 2 * p + 1).Next() + k; };

  CsvTable table({"pair", "samples", "bernoulli_rel_error", "bernoulli_max_z", "bernoulli_beyond_4se",
                  "structured_rel_error", "structured_max_z", "structured_beyond_4se"});
  std::size_t beyond = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto r = EstimatorCheck(pairs[p].w, pairs[p].dy, pattern, args.samples, sample_seed(p, 0));
    beyond += r.bernoulli.beyond_4se;
    table.Add({Num(p), Num(args.samples), Num(r.bernoulli.relative_error), Num(r.bernoulli.max_z),
               Num(r.bernoulli.beyond_4se), Num(r.structured.relative_error), Num(r.structured.max_z),
               Num(r.structured.beyond_4se)});
  }
  table.Write(dir / "theorem.csv", hash);

  // Error against sample count over one decade and a half, averaged over pairs.
  std::vector<double> counts, errors;
  CsvTable convergence({"samples", "mean_bernoulli_rel_error"});
  for (double f : {0.01, 0.0316, 0.1, 0.316, 1.0}) {
    const auto n = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(f * static_cast<double>(args.samples))));
    double sum = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p)
      sum += EstimatorCheck(pairs[p].w, pairs[p].dy, pattern, n, sample_seed(p, n)).bernoulli.relative_error;
    counts.push_back(static_cast<double>(n));
    errors.push_back(sum / static_cast<double>(pairs.size()));
    convergence.Add({Num(n), Num(errors.back())});
  }
  convergence.Write(dir / "convergence.csv", hash);
  const double slope = LogLogSlope(counts, errors);
  WriteJson(dir / "summary.json", {{"config_hash", hash},
                                   {"pairs", args.pairs},
                                   {"samples", args.samples},
                                   {"entries_beyond_4se", beyond},
                                   {"entries_total", args.pairs * args.dy_rows * args.size},
                                   {"log_log_slope", slope}});
  WriteTiming(dir, {{"command", "verify-theorem"}, {"wall_seconds", Seconds(started)}});
  out << "entries_beyond_4se " << beyond << " log_log_slope " << Num(slope) << '\n';
  return kExitOk;
}

struct MemoryArgs {
  std::string pattern = "2:4";
  BitBudget budget;
  bool no_transpose = false;
  bool no_mask = false;
  std::size_t d_in = 1024;
  std::size_t d_out = 1024;
  std::size_t rank = 0;
  std::string config_path;
  double remainder_bits = -1;
};

int CmdMemory(const MemoryArgs& args, const Common& common, std::ostream& out) {
  const NmPattern pattern = ParsePatternArg(args.pattern);
  BitBudget budget = args.budget;
  budget.store_transpose = !args.no_transpose;
  budget.include_mask = !args.no_mask;
  std::ostringstream canonical;
  canonical << "report-memory pattern=" << args.pattern << " weight_bits=" << Num(budget.weight_bits)
            << " grad_bits=" << Num(budget.grad_bits) << " mask_bits=" << Num(budget.mask_bits)
            << " states=" << Num(budget.optimizer_states) << " state_bits=" << Num(budget.state_bits)
            << " index_bits=" << Num(budget.index_bits) << " transpose=" << budget.store_transpose
            << " mask=" << budget.include_mask << " d_in=" << args.d_in << " d_out=" << args.d_out
            << " rank=" << args.rank << " remainder=" << Num(args.remainder_bits);

  std::optional<TrainConfig> config;
  if (!args.config_path.empty()) {
    config = ResolveConfig(args.config_path, common);
    canonical << '\n' << CanonicalConfig(*config);
  }
  const auto dir = PrepareOutput(common.out_dir);
  const std::string hash = HashText(canonical.str());

  const auto m = TrainingMemory(budget, pattern);
  const double inference = InferenceMemoryRatio(pattern, args.d_in, args.d_out, args.rank, budget.weight_bits);
  CsvTable table({"quantity", "value", "note"});
  table.Add({"pattern", pattern.ToString(), ""});
  table.Add({"index_bits_per_group", Num(budget.IndexBitsFor(pattern)), "ceil(log2 C(m,n)) unless overridden"});
  table.Add({"train_weight_bits_per_group", Num(m.weights), "packed values + index codes, both copies"});
  table.Add({"train_mask_bits_per_group", Num(m.mask), ""});
  table.Add({"train_gradient_bits_per_group", Num(m.gradients), ""});
  table.Add({"train_optimizer_bits_per_group", Num(m.optimizer), ""});
  table.Add({"train_sparse_bits_per_group", Num(m.sparse_total), ""});
  table.Add({"train_dense_bits_per_group", Num(m.dense_total), ""});
  table.Add({"training_memory_ratio", Num(m.ratio), "sparse / dense footprint factor"});
  table.Add({"training_memory_reduction", Num(1.0 - m.ratio), "1 - factor"});
  table.Add({"published_training_figure", "0.68",
             "stated as 'reduced by 68%'; matches this factor when read as reduced-to, not reduced-by"});
  table.Add({"inference_memory_ratio", Num(inference),
             "d_in=" + Num(args.d_in) + " d_out=" + Num(args.d_out) + " rank=" + Num(args.rank)});
  table.Add({"published_inference_figure", "0.54", "stated as '54% reduction'; compare 35/64 = 0.546875 at rank 0"});

  Json summary{{"config_hash", hash}, {"training_memory_ratio", m.ratio}, {"inference_memory_ratio", inference}};
  if (config) {
    const std::size_t vocab = config->model == ModelKind::kLm ? CharCorpus::Load(config->corpus_path, config->validation_fraction).vocab_size() : 0;
    const auto model = BuildModel<float>(*config, vocab);
    std::vector<LayerFootprint> layers;
    double remainder_elems = 0.0;
    for (const auto& l : model->linears()) {
      const auto* s = l.module.sparse();
      const auto* d = l.module.dynamic();
      const NmPattern p = s ? s->pattern() : d ? d->mask().pattern() : NmPattern(1, 1);
      layers.push_back({l.module.d_in(), l.module.d_out(), s != nullptr || d != nullptr, p});
      remainder_elems += static_cast<double>(l.module.d_out());  // bias
    }
    for (const auto& p : model->params()) remainder_elems += static_cast<double>(p.param.value.size());
    const double per_elem = budget.weight_bits + budget.grad_bits + budget.optimizer_states * budget.state_bits;
    const double remainder = args.remainder_bits >= 0 ? args.remainder_bits : remainder_elems * per_elem;
    const auto whole = ModelTrainingMemory(layers, budget, remainder);
    table.Add({"model_dense_bits", Num(whole.dense_bits), "includes dense remainder"});
    table.Add({"model_sparse_bits", Num(whole.sparse_bits), "includes dense remainder"});
    table.Add({"model_dense_remainder_bits", Num(remainder), "embeddings, norms, biases"});
    table.Add({"model_training_memory_ratio", Num(whole.ratio), ""});
    summary["model_training_memory_ratio"] = whole.ratio;
  }
  table.Write(dir / "memory.csv", hash);
  WriteJson(dir / "summary.json", summary);
  out << "training_memory_ratio " << Num(m.ratio) << " inference_memory_ratio " << Num(inference) << '\n';
  return kExitOk;
}

struct FlopArgs {
  std::string pattern = "2:4";
  std::size_t batch = 2048;
  std::size_t d_in = 4096;
  std::size_t d_out = 4096;
  std::size_t rank = 0;
  double bytes = 2;
};

int CmdFlops(const FlopArgs& args, const Common& common, std::ostream& out) {
  const NmPattern pattern = ParsePatternArg(args.pattern);
  const auto f = FlopModel(args.batch, args.d_in, args.d_out, pattern, args.rank, args.bytes);
  const auto dir = PrepareOutput(common.out_dir);
  std::ostringstream canonical;
  canonical << "report-flops pattern=" << args.pattern << " batch=" << args.batch << " d_in=" << args.d_in
            << " d_out=" << args.d_out << " rank=" << args.rank << " bytes=" << Num(args.bytes);
  CsvTable table({"pattern", "batch", "d_in", "d_out", "rank", "dense_flops", "sparse_flops", "adapter_flops",
                  "ratio", "dense_intensity", "sparse_intensity", "adapter_intensity"});
  table.Add({pattern.ToString(), Num(args.batch), Num(args.d_in), Num(args.d_out), Num(args.rank), Num(f.dense_flops),
             Num(f.sparse_flops), Num(f.adapter_flops), Num(f.ratio), Num(f.dense_intensity),
             Num(f.sparse_intensity), Num(f.adapter_intensity)});
  table.Write(dir / "flops.csv", HashText(canonical.str()));
  out << "ratio " << Num(f.ratio) << '\n';
  return kExitOk;
}

struct BenchArgs {
  std::string pattern = "2:4";
  std::size_t batch = 256;
  std::size_t d_in = 512;
  std::size_t d_out = 512;
  std::size_t reps = 5;
};

int CmdBench(const BenchArgs& args, const Common& common, std::ostream& out) {
  const NmPattern pattern = ParsePatternArg(args.pattern);
  if (args.reps == 0) throw ConfigError("--reps must be positive");
  const auto dir = PrepareOutput(common.out_dir);
  std::ostringstream canonical;
  canonical << "bench-spmm pattern=" << args.pattern << " batch=" << args.batch << " d_in=" << args.d_in
            << " d_out=" << args.d_out << " reps=" << args.reps << " seed=" << common.seed;
  Rng rng = Rng::ForStream(common.seed, 0);
  const auto x = DenseMatrix<float>::RandomNormal(args.batch, args.d_in, rng);
  const auto w = DenseMatrix<float>::RandomNormal(args.d_out, args.d_in, rng);
  const auto packed = Compress(w, MagnitudeMask(w, pattern));
  const auto dense_w = Decompress(packed);
  const auto plan = PlanSquareTiles(args.d_out, args.d_in, pattern);
  const auto tiles = SplitTiles(packed, plan);

  struct Kernel {
    std::string name;
    std::function<DenseMatrix<float>()> run;
    double flops;
  };
  const double dense_flops = 2.0 * args.batch * args.d_in * args.d_out;
  const std::vector<Kernel> kernels{
      {"dense_matmul", [&] { return MatMulTransB(x, dense_w); }, dense_flops},
      {"spmm", [&] { return Spmm(x, packed); }, dense_flops * pattern.density()},
      {"tiled_spmm", [&] { return TiledSpmm(x, tiles, plan); }, dense_flops * pattern.density()},
  };
  CsvTable table({"kernel", "pattern", "batch", "d_in", "d_out", "flops", "checksum"});
  Json timing{{"command", "bench-spmm"}, {"kernels", Json::array()}};
  for (const auto& k : kernels) {
    DenseMatrix<float> y;
    std::vector<double> ms;
    for (std::size_t r = 0; r < args.reps; ++r) {
      const auto started = Clock::now();
      y = k.run();
      ms.push_back(1e3 * Seconds(started));
    }
    double checksum = 0.0;
    for (float v : y.values()) checksum += v;
    table.Add({k.name, pattern.ToString(), Num(args.batch), Num(args.d_in), Num(args.d_out), Num(k.flops),
               Num(checksum)});
    std::sort(ms.begin(), ms.end());
    const double median = ms[ms.size() / 2];
    timing["kernels"].push_back({{"kernel", k.name}, {"median_ms", median}, {"gflops", k.flops / median / 1e6}});
    out << k.name << " median_ms " << Num(median) << '\n';
  }
  table.Write(dir / "bench.csv", HashText(canonical.str()));
  WriteTiming(dir, timing);
  return kExitOk;
}

struct SweepArgs {
  std::string config_path;
  std::string patterns = "2:4,2:8";
};

int CmdSweep(const SweepArgs& args, const Common& common, std::ostream& out) {
  const TrainConfig base = ResolveConfig(args.config_path, common);
  if (base.model != ModelKind::kLm) throw ConfigError("sweep-mixed-nm needs model.kind = lm");
  if (base.lm.blocks % 2 != 0) throw ConfigError("sweep-mixed-nm needs an even block count");
  const auto pats = ParsePatternList(args.patterns);
  if (pats.size() != 2) throw ConfigError("--patterns takes exactly two patterns (dense-ish,sparse-ish)");
  const auto dir = PrepareOutput(common.out_dir);
  const auto started = Clock::now();
  const std::string hash = HashText("sweep-mixed-nm patterns=" + args.patterns + "\n" + CanonicalConfig(base));

  struct Entry {
    std::string name;
    double density;
    RunReport report;
  };
  std::vector<Entry> entries;
  for (const auto& [first, second] : {std::pair{pats[0], pats[0]}, {pats[0], pats[1]}, {pats[1], pats[0]}}) {
    TrainConfig c = base;
    c.sparsity.enabled = true;
    c.sparsity.block_patterns = {first, second};
    const std::string name = "[" + first.ToString() + "-" + second.ToString() + "]";
    out << "running " << name << '\n';
    auto report = Train(c);
    entries.push_back({name, report.average_density, std::move(report)});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.density != b.density) return a.density > b.density;
    return a.report.final_validation_loss < b.report.final_validation_loss;
  });
  CsvTable table({"config", "average_density", "final_train_loss", "final_validation_loss", "perplexity"});
  Json summary{{"config_hash", hash}, {"densest", entries.front().name}, {"rows", Json::array()}};
  for (const auto& e : entries) {
    table.Add({e.name, Num(e.density), Num(e.report.final_train_loss), Num(e.report.final_validation_loss),
               Num(e.report.perplexity.value_or(std::nan("")))});
    summary["rows"].push_back({{"config", e.name},
                               {"average_density", e.density},
                               {"final_validation_loss", e.report.final_validation_loss}});
  }
  table.Write(dir / "sweep.csv", hash);
  WriteJson(dir / "summary.json", summary);
  WriteTiming(dir, {{"command", "sweep-mixed-nm"}, {"wall_seconds", Seconds(started)}});
  return kExitOk;
}

int Fail(std::ostream& err, const char* kind, int code, const std::string& message) {
  err << Json{{"error", kind}, {"exit_code", code}, {"message", message}}.dump() << '\n';
  return code;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"N:M double-pruned sparse training toolkit", "nmslope"};
  app.require_subcommand(1, 1);
  Common common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "Seed (overrides train.seed for config-driven commands)")
        ->each([&](const std::string&) { common.seed_given = true; });
  };

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "Train a model from a config file");
  cmd_train->add_option("--config", train.config_path, "Config file")->required();
  cmd_train->add_flag("--checkpoint", train.checkpoint, "Write the final model under <out>/checkpoint");
  cmd_train->add_option("--log-every", train.log_every, "Print the loss every k iterations");
  add_common(cmd_train);

  LemmaArgs lemma;
  auto* cmd_lemma = app.add_subcommand("verify-lemma", "Imposed sparsity of double pruning: analytic vs Monte Carlo");
  cmd_lemma->add_option("--patterns", lemma.patterns, "Comma-separated N:M list")->capture_default_str();
  cmd_lemma->add_option("--trials", lemma.trials, "Monte Carlo trials")->capture_default_str();
  cmd_lemma->add_option("--side", lemma.side, "Side of each random square matrix")->capture_default_str();
  add_common(cmd_lemma);

  TheoremArgs theorem;
  auto* cmd_theorem = app.add_subcommand("verify-theorem", "Unbiasedness of the masked-weight gradient estimator");
  cmd_theorem->add_option("--pattern", theorem.pattern)->capture_default_str();
  cmd_theorem->add_option("--pairs", theorem.pairs, "Random (W, dY) pairs")->capture_default_str();
  cmd_theorem->add_option("--size", theorem.size, "Side of W")->capture_default_str();
  cmd_theorem->add_option("--dy-rows", theorem.dy_rows, "Rows of dY")->capture_default_str();
  cmd_theorem->add_option("--samples", theorem.samples, "Masks per pair")->capture_default_str();
  add_common(cmd_theorem);

  MemoryArgs memory;
  auto* cmd_memory = app.add_subcommand("report-memory", "Training and inference footprint factors");
  cmd_memory->add_option("--pattern", memory.pattern)->capture_default_str();
  cmd_memory->add_option("--weight-bits", memory.budget.weight_bits)->capture_default_str();
  cmd_memory->add_option("--grad-bits", memory.budget.grad_bits)->capture_default_str();
  cmd_memory->add_option("--mask-bits", memory.budget.mask_bits)->capture_default_str();
  cmd_memory->add_option("--optimizer-states", memory.budget.optimizer_states)->capture_default_str();
  cmd_memory->add_option("--state-bits", memory.budget.state_bits)->capture_default_str();
  cmd_memory->add_option("--index-bits", memory.budget.index_bits, "Negative: ceil(log2 C(m,n))")
      ->capture_default_str();
  cmd_memory->add_flag("--no-transpose", memory.no_transpose, "Do not count the transposed copy");
  cmd_memory->add_flag("--no-mask", memory.no_mask, "Do not count the binary mask");
  cmd_memory->add_option("--d-in", memory.d_in)->capture_default_str();
  cmd_memory->add_option("--d-out", memory.d_out)->capture_default_str();
  cmd_memory->add_option("--rank", memory.rank)->capture_default_str();
  cmd_memory->add_option("--config", memory.config_path, "Also report the whole model of this config");
  cmd_memory->add_option("--dense-remainder-bits", memory.remainder_bits,
                         "Bits of non-linear state (default: counted from the model)");
  add_common(cmd_memory);

  FlopArgs flops;
  auto* cmd_flops = app.add_subcommand("report-flops", "FLOP and arithmetic-intensity model of one layer");
  cmd_flops->add_option("--pattern", flops.pattern)->capture_default_str();
  cmd_flops->add_option("--batch", flops.batch)->capture_default_str();
  cmd_flops->add_option("--d-in", flops.d_in)->capture_default_str();
  cmd_flops->add_option("--d-out", flops.d_out)->capture_default_str();
  cmd_flops->add_option("--rank", flops.rank)->capture_default_str();
  cmd_flops->add_option("--bytes", flops.bytes, "Bytes per element")->capture_default_str();
  add_common(cmd_flops);

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench-spmm", "Time dense vs packed multiplication");
  cmd_bench->add_option("--pattern", bench.pattern)->capture_default_str();
  cmd_bench->add_option("--batch", bench.batch)->capture_default_str();
  cmd_bench->add_option("--d-in", bench.d_in)->capture_default_str();
  cmd_bench->add_option("--d-out", bench.d_out)->capture_default_str();
  cmd_bench->add_option("--reps", bench.reps)->capture_default_str();
  add_common(cmd_bench);

  SweepArgs sweep;
  auto* cmd_sweep = app.add_subcommand("sweep-mixed-nm", "Uniform vs half-and-half block patterns");
  cmd_sweep->add_option("--config", sweep.config_path, "Language-model config")->required();
  cmd_sweep->add_option("--patterns", sweep.patterns, "Two patterns A,B")->capture_default_str();
  add_common(cmd_sweep);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      return Fail(err, "usage", kExitConfig, e.what());
    }
    if (*cmd_train) return CmdTrain(train, common, out);
    if (*cmd_lemma) return CmdLemma(lemma, common, out);
    if (*cmd_theorem) return CmdTheorem(theorem, common, out);
    if (*cmd_memory) return CmdMemory(memory, common, out);
    if (*cmd_flops) return CmdFlops(flops, common, out);
    if (*cmd_bench) return CmdBench(bench, common, out);
    if (*cmd_sweep) return CmdSweep(sweep, common, out);
    return Fail(err, "usage", kExitConfig, "no command given");
  } catch (const ConfigError& e) {
    return Fail(err, "config", kExitConfig, e.what());
  } catch (const DivergenceError& e) {
    return Fail(err, "divergence", kExitDivergence, e.what());
  } catch (const IoError& e) {
    return Fail(err, "io", kExitIo, e.what());
  } catch (const std::exception& e) {
    return Fail(err, "internal", kExitFailure, e.what());
  }
}

}  // namespace nmslope
