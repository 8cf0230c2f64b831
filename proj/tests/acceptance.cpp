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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion, writes
// supporting CSV files under the output directory (first argument, default
// "acceptance_out") and exits non-zero if any criterion fails. Further
// arguments restrict the run to the named criteria.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nmslope/analysis.hpp"
#include "nmslope/cli.hpp"
#include "nmslope/layers.hpp"
#include "nmslope/lemma.hpp"
#include "nmslope/model.hpp"
#include "nmslope/sparse_ops.hpp"
#include "nmslope/trainer.hpp"
#include "oracles.hpp"

using namespace nmslope;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double Since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string Num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Collects the individual checks of one criterion.
class Verdict {
 public:
  void Check(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void Note(const std::string& text) { notes_.push_back(text); }
  bool ok() const { return failures_.empty(); }

  std::string Detail() const {
    std::string out;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + ("failed: " + f);
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

int RunCommand(std::vector<std::string> args) {
  args.insert(args.begin(), "nmslope");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != kExitOk) std::cerr << err.str();
  return code;
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Values of one named column of a CSV written by the CLI (empty cells -> NaN).
std::vector<double> CsvColumn(const fs::path& path, const std::string& name) {
  std::istringstream in(Slurp(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string cell;
    while (std::getline(h, cell, ',')) header.push_back(cell);
  }
  const auto col = static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream r(line);
    while (std::getline(r, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    out.push_back(col < cells.size() && !cells[col].empty() ? std::stod(cells[col]) : std::nan(""));
  }
  return out;
}

std::string CorpusPath() { return std::string(NMSLOPE_DATA_DIR) + "/paradise_lost_books_1_4.txt"; }

// ---------------------------------------------------------------------------

Verdict ImposedSparsity() {
  Verdict v;
  const auto started = Clock::now();
  const double a12 = ImposedSparsityAnalytic(NmPattern(1, 2));
  const double a24 = ImposedSparsityAnalytic(NmPattern(2, 4));
  const double a28 = ImposedSparsityAnalytic(NmPattern(2, 8));
  v.Check(std::abs(a12 - 0.125) <= 1e-12, "analytic(1:2) = " + Num(a12) + ", expected 0.125");
  v.Check(std::abs(a24 - 0.09375) <= 1e-12, "analytic(2:4) = " + Num(a24) + ", expected 0.09375");
  v.Check(std::abs(a28 - 0.0339) <= 5e-4, "analytic(2:8) = " + Num(a28) + ", expected 0.0339 +- 5e-4");
  std::uint64_t stream = 0;
  for (const auto& p : {NmPattern(1, 2), NmPattern(2, 4), NmPattern(2, 8), NmPattern(4, 8)}) {
    const double analytic = ImposedSparsityAnalytic(p);
    const auto mc = ImposedSparsityMonteCarlo(p, 512, 200, Rng::ForStream(1, stream++).Next());
    const double z = (mc.mean - analytic) / mc.standard_error;
    v.Check(std::abs(z) <= 3.0, p.ToString() + " Monte Carlo z = " + Num(z));
    v.Note(p.ToString() + " analytic " + Num(analytic) + " mc " + Num(mc.mean) + " z " + Num(z));
  }
  const double secs = Since(started);
  v.Check(secs < 30.0, "runtime " + Num(secs) + " s");
  return v;
}

Verdict Unbiasedness(const fs::path& out) {
  Verdict v;
  const auto started = Clock::now();
  const auto dir = out / "theorem";
  v.Check(RunCommand({"verify-theorem", "--pattern", "2:4", "--pairs", "10", "--size", "64", "--samples", "10000",
                      "--out", dir.string()}) == kExitOk,
          "verify-theorem exit code");
  const double secs = Since(started);
  const auto summary = nlohmann::json::parse(Slurp(dir / "summary.json"));
  const auto beyond = summary["entries_beyond_4se"].get<std::size_t>();
  const double slope = summary["log_log_slope"].get<double>();
  v.Check(beyond == 0, Num(static_cast<double>(beyond)) + " entries beyond 4 SE");
  v.Check(slope >= -0.7 && slope <= -0.3, "log-log slope " + Num(slope));
  v.Check(secs < 60.0, "runtime " + Num(secs) + " s");
  v.Note("entries " + summary["entries_total"].dump() + ", beyond 4 SE " + Num(static_cast<double>(beyond)) +
         ", slope " + Num(slope) + ", " + Num(std::round(secs * 10) / 10) + " s");
  return v;
}

// Random shapes for the kernel property tests.
struct Case {
  NmPattern pattern;
  std::size_t batch, rows, cols;
};

Case RandomCase(Rng& rng) {
  static const std::vector<NmPattern> patterns{NmPattern(1, 2), NmPattern(2, 4), NmPattern(1, 4), NmPattern(2, 8),
                                               NmPattern(4, 8), NmPattern(3, 8), NmPattern(4, 16), NmPattern(2, 2)};
  const auto p = patterns[rng.Below(patterns.size())];
  const auto m = static_cast<std::size_t>(p.m());
  return {p, 1 + rng.Below(16), m * (1 + rng.Below(64 / m + 1)), m * (1 + rng.Below(64 / m + 1))};
}

Verdict KernelOracles() {
  Verdict v;
  constexpr int kCases = 1000;
  constexpr double kTol = 1e-5;
  Rng rng(2024);
  std::vector<double> worst(6, 0.0);
  std::vector<int> failed(6, 0);
  auto record = [&](int kernel, double err) {
    worst[kernel] = std::max(worst[kernel], err);
    if (!(err <= kTol)) ++failed[kernel];
  };
  for (int t = 0; t < kCases; ++t) {
    const Case c = RandomCase(rng);
    const auto mask = RandomMask(c.rows, c.cols, c.pattern, rng.Next());
    const auto dense = MatrixF::RandomNormal(c.rows, c.cols, rng);
    // Double pruning leaves padded groups, which exercises the zero slots.
    const auto stored = rng.Below(2) == 0 ? mask : DoublePrune(dense, mask, c.pattern);
    const auto w = Compress(dense, stored);
    const auto w_dense = stored.Apply(dense);
    const auto x = MatrixF::RandomNormal(c.batch, c.cols, rng);
    const auto reference = oracle::MatMulNT(x, w_dense);

    record(0, RelativeError(Spmm(x, w), reference));

    // Tiling needs square tiles: use a d x d or c*d x d weight.
    {
      const std::size_t d_in = c.cols;
      const std::size_t d_out = d_in * (1 + rng.Below(3));
      const auto tmask = RandomMask(d_out, d_in, c.pattern, rng.Next());
      const auto tw = Compress(MatrixF::RandomNormal(d_out, d_in, rng), tmask);
      const auto plan = PlanSquareTiles(d_out, d_in, c.pattern);
      const auto tiled = TiledSpmm(x, SplitTiles(tw, plan), plan);
      record(1, RelativeError(tiled, oracle::MatMulNT(x, Decompress(tw))));
    }

    {
      const std::size_t rank = 1 + rng.Below(std::min<std::size_t>(8, std::min(c.rows, c.cols)));
      const AdapterPair<float> ad(MatrixF::RandomNormal(c.rows, rank, rng), MatrixF::RandomNormal(rank, c.cols, rng));
      auto full = oracle::MatMulNN(ad.up, ad.down);
      AddInPlace(full, w_dense.Cast<double>());
      record(2, RelativeError(FusedSparseLowRankForward(x, w, ad), oracle::MatMulNT(x.Cast<double>(), full)));
    }

    {
      const auto other = Compress(MatrixF::RandomNormal(c.rows, c.cols, rng), StoredSlots(w));
      const auto beta = static_cast<float>(rng.Uniform(-2, 2));
      const auto gamma = static_cast<float>(rng.Uniform(-2, 2));
      MatrixD expected = Decompress(w).Cast<double>();
      for (auto& e : expected.values()) e *= beta;
      AddInPlace(expected, Decompress(other).Cast<double>(), static_cast<double>(gamma));
      record(3, RelativeError(Decompress(SparseAdd(w, other, beta, gamma)), expected));
    }

    {
      const auto g = MatrixF::RandomNormal(c.rows, c.cols, rng);
      const bool exact = Decompress(PruneAndCompress(g, stored)) == stored.Apply(g);
      record(4, exact ? 0.0 : 1.0);
    }

    {
      auto packed = w;
      const auto fresh = MatrixF::RandomNormal(c.rows, c.cols, rng);
      UpdateSparseValues(packed, fresh);
      const bool same_codes = std::ranges::equal(packed.codes(), w.codes());
      const auto expected = StoredSlots(w).Apply(fresh);
      record(5, same_codes ? RelativeError(Decompress(packed), expected) : 1.0);
    }
  }
  const char* names[] = {"spmm", "tiled_spmm", "fused_sparse_lowrank_forward", "sparse_add", "prune_and_compress",
                         "update_sparse_values"};
  for (int k = 0; k < 6; ++k) {
    v.Check(failed[k] == 0, std::string(names[k]) + " failed " + Num(failed[k]) + "/" + Num(kCases) + " cases");
    v.Note(std::string(names[k]) + " worst " + Num(worst[k]));
  }
  return v;
}

// ---------------------------------------------------------------------------

constexpr double kStep = 1e-6;

// Checks every kept weight of every sparse layer (every `stride`-th one) and
// returns the number checked.
std::size_t CheckSparseGradients(Model<double>& model, const std::function<double()>& loss, std::size_t stride,
                                 Verdict& v, const std::string& label) {
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (auto& named : model.linears()) {
    auto* layer = named.module.sparse();
    if (!layer) continue;
    const auto grad = Decompress(named.module.pending_sparse_grad()->weight);
    const auto base = Decompress(layer->w_fwd());
    std::size_t seen = 0;
    for (std::size_t r = 0; r < base.rows(); ++r)
      for (std::size_t c = 0; c < base.cols(); ++c) {
        if (!layer->mask().kept(r, c)) {
          if (grad(r, c) != 0.0) ++bad;
          continue;
        }
        if (seen++ % stride != 0) continue;
        auto w = base;
        w(r, c) = base(r, c) + kStep;
        layer->SetWeightValues(w);
        const double up = loss();
        w(r, c) = base(r, c) - kStep;
        layer->SetWeightValues(w);
        const double down = loss();
        layer->SetWeightValues(base);
        const double fd = (up - down) / (2 * kStep);
        const double err = std::abs(grad(r, c) - fd) / std::max(std::abs(grad(r, c)), 1e-5);
        worst = std::max(worst, err);
        if (std::abs(grad(r, c) - fd) > 1e-3 * std::abs(grad(r, c)) + 1e-8) ++bad;
        ++checked;
      }
  }
  v.Check(bad == 0, label + ": " + Num(static_cast<double>(bad)) + " mismatches");
  v.Check(checked > 0, label + ": no weights checked");
  v.Note(label + " " + Num(static_cast<double>(checked)) + " weights, worst rel " + Num(worst));
  return checked;
}

NmMask TransposableMask(std::size_t side) {
  std::vector<std::uint8_t> keep(side * side, 0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) keep[r * side + c] = ((c % 4) / 2) == ((r % 4) / 2) ? 1 : 0;
  return NmMask(side, side, NmPattern(2, 4), Grouping::kRowWise, keep);
}

Verdict Gradients() {
  Verdict v;
  SparsitySpec spec;
  spec.enabled = true;
  spec.block_patterns = {NmPattern(2, 4)};
  spec.dense_first = false;
  spec.mask_seed = 99;

  spec.modules = PrunedModules::kMlpOnly;
  MlpModel<double> mlp(MlpShape{8, 16, 8}, spec, 5);
  RegressionTask task(RegressionSpec{8, 8, 8, 0.01, 3});
  const auto batch = task.Sample<double>(0, 6);
  mlp.ForwardBackward(batch, InputGradMode::kExact);
  CheckSparseGradients(mlp, [&] { return mlp.Evaluate(batch); }, 1, v, "2-layer MLP, MLP pruned");

  spec.modules = PrunedModules::kMlpAndAttention;
  TinyLm<double> lm(LmShape{12, 8, 16, 2, 1, 4}, spec, 7);
  Rng rng(8);
  Batch<double> tokens;
  tokens.sequences = 2;
  tokens.length = 6;
  for (std::size_t i = 0; i < 2 * 7; ++i) tokens.tokens.push_back(static_cast<std::uint32_t>(rng.Below(12)));
  lm.ForwardBackward(tokens, InputGradMode::kExact);
  CheckSparseGradients(lm, [&] { return lm.Evaluate(tokens); }, 3, v, "one-block LM, MLP+attention pruned");

  // Backward input, transposable mask: exact.
  {
    const auto w = MatrixD::RandomNormal(16, 16, rng);
    SparseLinearLayer<double> layer(w, TransposableMask(16), MatrixD());
    const auto dy = MatrixD::RandomNormal(5, 16, rng);
    const double err = RelativeError(layer.BackwardInput(dy), oracle::MatMulNN(dy, Decompress(layer.w_fwd())));
    v.Check(err <= 1e-12, "transposable backward input rel error " + Num(err));
  }
  // General masks: ||dY W^R - dY W^{R,C}|| <= ||dY|| ||W^R - W^{R,C}||_2.
  int violations = 0;
  double worst_ratio = 0.0;
  for (int t = 0; t < 20; ++t) {
    const auto w = MatrixD::RandomNormal(32, 16, rng);
    const auto layer = SparseLinearLayer<double>::Create(w, NmPattern(2, 4), MaskInit::kRandom, rng.Next(), MatrixD());
    const auto dy = MatrixD::RandomNormal(9, 32, rng);
    const auto w_r = Decompress(layer.w_fwd());
    const auto w_rc = Transpose(Decompress(layer.w_bwd()));
    MatrixD diff = layer.BackwardInput(dy);
    AddInPlace(diff, oracle::MatMulNN(dy, w_r), -1.0);
    MatrixD wdiff = w_r;
    AddInPlace(wdiff, w_rc, -1.0);
    const double bound = FrobeniusNorm(dy) * oracle::SpectralNorm(wdiff);
    worst_ratio = std::max(worst_ratio, FrobeniusNorm(diff) / bound);
    if (FrobeniusNorm(diff) > bound * (1 + 1e-9)) ++violations;
  }
  v.Check(violations == 0, "operator-norm bound violated " + Num(violations) + "/20");
  v.Note("input-gradient error / bound worst " + Num(worst_ratio));
  return v;
}

Verdict MemoryAndFlops() {
  Verdict v;
  const auto flops = FlopModel(2048, 4096, 4096, NmPattern(2, 4), 0);
  v.Check(flops.ratio == 0.5, "flop ratio " + Num(flops.ratio));
  const double inference = InferenceMemoryRatio(NmPattern(2, 4), 4096, 4096, 0, 16);
  v.Check(inference == 35.0 / 64.0, "inference ratio " + Num(inference));
  const double training = TrainingMemoryRatio(BitBudget{}, NmPattern(2, 4));
  v.Check(training >= 0.60 && training <= 0.72, "training ratio " + Num(training));
  v.Note("flops " + Num(flops.ratio) + ", inference " + Num(inference) + " (35/64), training " + Num(training) +
         " vs published 68% (read as reduced-to)");
  return v;
}

// ---------------------------------------------------------------------------

TrainConfig LanguageModelRun(std::uint64_t seed) {
  TrainConfig c;
  c.model = ModelKind::kLm;
  c.corpus_path = CorpusPath();
  c.lm = LmShape{65, 32, 128, 4, 3, 4};
  c.iterations = 5000;
  c.batch_size = 2;
  c.seed = seed;
  c.optimizer.kind = OptimizerKind::kAdam;
  c.optimizer.lr = 3e-3;
  c.lr_shape = LrSchedule::Shape::kCosine;
  c.warmup = 100;
  c.eval_batches = 16;
  c.eval_batch_size = 32;
  c.mask_log_every = 1000;
  return c;
}

TrainConfig WithPattern(TrainConfig c, const char* pattern) {
  c.sparsity.enabled = true;
  c.sparsity.block_patterns = {NmPattern::Parse(pattern)};
  return c;
}

Verdict TrainingBehaviour(const fs::path& out) {
  Verdict v;
  const auto started = Clock::now();

  // (a) Switching adapters on leaves the model function unchanged.
  {
    TrainConfig c;
    c.mlp = MlpShape{32, 64, 16};
    c.iterations = 200;
    c.seed = 7;
    c.optimizer.lr = 3e-3;
    c = WithPattern(c, "2:4");
    c.adapter.rank_ratio = 0.0625;
    c.adapter.lazy_fraction = 0.05;
    const auto r = Train(c);
    const double diff = r.adapter_switch_max_diff.value_or(std::nan(""));
    v.Check(r.adapters_used && diff <= 1e-6, "(a) switch output change " + Num(diff));
    v.Note("(a) switch at " + Num(static_cast<double>(r.adapter_start)) + ", max output change " + Num(diff));
  }

  // (c) A 4:4 pattern reproduces the dense trainer.
  {
    TrainConfig c;
    c.mlp = MlpShape{32, 64, 16};
    c.iterations = 100;
    c.seed = 7;
    c.double_precision = true;
    const auto dense = Train(c);
    const auto full = Train(WithPattern(c, "4:4"));
    double worst = 0.0;
    for (std::size_t i = 0; i < dense.loss.size(); ++i) worst = std::max(worst, std::abs(dense.loss[i] - full.loss[i]));
    v.Check(worst <= 1e-6, "(c) 4:4 vs dense max loss difference " + Num(worst));
    v.Note("(c) 4:4 vs dense over 100 steps " + Num(worst));
  }

  // (b) Loss ordering on the character model, three seeds, majority vote.
  std::ofstream csv(out / "training_order.csv");
  csv << "seed,dense,slope_2_4,slope_2_8,slope_2_4_adapters,dense_train,slope_2_4_train,slope_2_8_train,"
         "slope_2_4_adapters_train\n";
  int order_votes = 0, adapter_votes = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto dense = Train(LanguageModelRun(seed));
    const auto s28 = Train(WithPattern(LanguageModelRun(seed), "2:8"));
    auto with_adapters = WithPattern(LanguageModelRun(seed), "2:4");
    with_adapters.adapter.rank_ratio = 0.0156;
    with_adapters.adapter.lazy_fraction = 0.01;
    with_adapters.adapter.paired_control = true;
    const auto s24a = Train(with_adapters);
    const double d = dense.final_validation_loss;
    const double a = *s24a.control_validation_loss;
    const double b = s28.final_validation_loss;
    const double ad = s24a.final_validation_loss;
    const bool ordered = d <= a && a <= b;
    const bool adapters_help = ad <= a;
    order_votes += ordered;
    adapter_votes += adapters_help;
    csv << seed << ',' << Num(d) << ',' << Num(a) << ',' << Num(b) << ',' << Num(ad) << ','
        << Num(dense.final_train_loss) << ',' << Num(*s24a.control_train_loss) << ',' << Num(s28.final_train_loss)
        << ',' << Num(s24a.final_train_loss) << '\n';
    v.Note("(b) seed " + Num(static_cast<double>(seed)) + " validation dense " + Num(d) + ", 2:4 " + Num(a) +
           ", 2:8 " + Num(b) + ", 2:4+adapters " + Num(ad) + " (rank " + Num(static_cast<double>(s24a.adapter_rank)) +
           ")");
  }
  v.Check(order_votes >= 2, "(b) dense <= 2:4 <= 2:8 held for " + Num(order_votes) + "/3 seeds");
  v.Check(adapter_votes >= 2, "(b) adapters <= no adapters held for " + Num(adapter_votes) + "/3 seeds");
  v.Note("(b) ordering " + Num(order_votes) + "/3, adapters " + Num(adapter_votes) + "/3");
  const double secs = Since(started);
  v.Check(secs < 1800.0, "runtime " + Num(secs) + " s");
  v.Note(Num(std::round(secs)) + " s");
  return v;
}

// ---------------------------------------------------------------------------

const std::string kMlpRun =
    "model.kind = mlp\nmodel.d_in = 32\nmodel.hidden = 64\nmodel.d_out = 16\nsparsity.pattern = 2:4\n"
    "sparsity.dense_first = false\noptimizer.lr = 3e-3\ntrain.iterations = 600\ntrain.seed = 7\n"
    "report.eval_batches = 4\n";

fs::path WriteConfig(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

Verdict MaskDiagnostics(const fs::path& out) {
  Verdict v;
  const auto dir = out / "mask_diagnostics";
  fs::create_directories(dir);
  for (const char* mode : {"random", "magnitude"}) {
    const auto cfg = WriteConfig(dir / (std::string(mode) + ".cfg"), kMlpRun + "sparsity.mask = " + mode + "\n");
    const auto run = dir / mode;
    v.Check(RunCommand({"train", "--config", cfg.string(), "--out", run.string()}) == kExitOk,
            std::string(mode) + " run exit code");
    const auto diff = CsvColumn(run / "loss.csv", "mask_diff");
    const bool all_zero = !diff.empty() && std::all_of(diff.begin(), diff.end(), [](double d) { return d == 0.0; });
    v.Check(all_zero, std::string(mode) + " mask-diff series not all zero");
  }
  const auto cfg = WriteConfig(dir / "dynamic.cfg", kMlpRun + "sparsity.mask = dynamic\n");
  const auto run = dir / "dynamic";
  v.Check(RunCommand({"train", "--config", cfg.string(), "--out", run.string()}) == kExitOk, "dynamic run exit code");
  const auto diff = CsvColumn(run / "loss.csv", "mask_diff");
  const auto smooth = Smooth(diff, 50);
  const bool settles = smooth.size() > 50 && smooth[49] > smooth.back();
  v.Check(settles, "dynamic smoothed mask-diff does not fall");
  if (smooth.size() > 50)
    v.Note("dynamic smoothed mask-diff " + Num(smooth[49]) + " -> " + Num(smooth.back()) + ", CSV " +
           (run / "loss.csv").string());
  return v;
}

Verdict Determinism(const fs::path& out) {
  Verdict v;
  const auto dir = out / "determinism";
  fs::create_directories(dir);
  const auto mlp = WriteConfig(dir / "mlp.cfg", kMlpRun + "sparsity.mask = dynamic\nadapter.rank_ratio = 0.0625\n");
  const auto lm = WriteConfig(dir / "lm.cfg", "model.kind = lm\nmodel.context = 8\nmodel.hidden = 16\nmodel.heads = 2\n"
                                              "model.blocks = 2\nmodel.mlp_ratio = 2\ndata.corpus = " +
                                                  CorpusPath() +
                                                  "\ntrain.iterations = 30\ntrain.batch_size = 2\n"
                                                  "report.eval_batches = 1\nreport.eval_batch_size = 2\n");
  const std::vector<std::vector<std::string>> commands{
      {"train", "--config", mlp.string()},
      {"train", "--config", lm.string(), "--seed", "5"},
      {"verify-lemma", "--trials", "10", "--side", "64"},
      {"verify-theorem", "--pairs", "2", "--size", "16", "--samples", "200"},
      {"report-memory", "--config", lm.string()},
      {"report-flops", "--pattern", "2:8", "--rank", "16"},
      {"bench-spmm", "--batch", "8", "--d-in", "64", "--d-out", "128", "--reps", "1"},
      {"sweep-mixed-nm", "--config", lm.string()},
  };
  std::size_t files = 0;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::vector<fs::path> runs;
    for (int rep = 0; rep < 2; ++rep) {
      auto args = commands[i];
      runs.push_back(dir / (Num(static_cast<double>(i)) + "_" + Num(rep)));
      args.push_back("--out");
      args.push_back(runs.back().string());
      v.Check(RunCommand(args) == kExitOk, commands[i][0] + " exit code");
    }
    for (const auto& entry : fs::directory_iterator(runs[0])) {
      if (entry.path().extension() != ".csv") continue;
      ++files;
      const auto twin = runs[1] / entry.path().filename();
      v.Check(Slurp(entry.path()) == Slurp(twin), commands[i][0] + " " + entry.path().filename().string() + " differs");
    }
  }
  v.Note(Num(static_cast<double>(files)) + " CSV files compared across " + Num(static_cast<double>(commands.size())) +
         " commands");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? argv[1] : "acceptance_out";
  fs::create_directories(out);
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {"imposed-sparsity", ImposedSparsity},
      {"estimator-unbiasedness", [&] { return Unbiasedness(out); }},
      {"kernel-oracles", KernelOracles},
      {"gradients", Gradients},
      {"memory-flops", MemoryAndFlops},
      {"training-behaviour", [&] { return TrainingBehaviour(out); }},
      {"mask-diagnostics", [&] { return MaskDiagnostics(out); }},
      {"determinism", [&] { return Determinism(out); }},
  };
  const std::vector<std::string> only(argv + std::min(argc, 2), argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.Check(false, std::string("exception: ") + e.what());
    }
    failures += !v.ok();
    std::cout << (v.ok() ? "PASS " : "FAIL ") << c.name << " | " << v.Detail() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
