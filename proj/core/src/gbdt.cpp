#include "floodpix/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

#include "floodpix/error.hpp"
#include "floodpix/rng.hpp"

namespace floodpix::gbdt {
namespace {

constexpr int kFormatVersion = 1;
constexpr double kTieTolerance = 1e-12;
constexpr double kMinDenominator = 1e-16;
constexpr std::uint64_t kSubsampleStream = 0x9e3779b97f4a7c15ULL;

struct HistBin {
  double grad = 0.0;
  double hess = 0.0;
  std::size_t count = 0;
};

struct Layout {
  std::vector<std::size_t> offset;  // first histogram slot of each feature
  std::size_t total = 0;

  explicit Layout(const BinIndex& bins) : offset(bins.features) {
    for (std::size_t f = 0; f < bins.features; ++f) {
      offset[f] = total;
      total += bins.bin_count(f);
    }
  }
};

using Histogram = std::vector<HistBin>;

void accumulate(std::span<const std::uint32_t> rows, const GradHess& gh, const BinIndex& bins, const Layout& layout,
                std::size_t f_begin, std::size_t f_end, Histogram& hist) {
  const std::size_t nf = bins.features;
  for (std::uint32_t r : rows) {
    const std::uint8_t* b = bins.bins.data() + static_cast<std::size_t>(r) * nf;
    const double g = gh.grad[r];
    const double h = gh.hess[r];
    for (std::size_t f = f_begin; f < f_end; ++f) {
      HistBin& slot = hist[layout.offset[f] + b[f]];
      slot.grad += g;
      slot.hess += h;
      ++slot.count;
    }
  }
}

Histogram build_histogram(std::span<const std::uint32_t> rows, const GradHess& gh, const BinIndex& bins,
                          const Layout& layout, int threads) {
  Histogram hist(layout.total);
  const std::size_t nf = bins.features;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), nf);
  if (workers <= 1 || rows.size() * nf < (std::size_t{1} << 16)) {
    accumulate(rows, gh, bins, layout, 0, nf, hist);
    return hist;
  }
  // Features are disjoint histogram slots, so workers never share writes.
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = nf * w / workers;
    const std::size_t end = nf * (w + 1) / workers;
    pool.emplace_back([&, begin, end] { accumulate(rows, gh, bins, layout, begin, end, hist); });
  }
  for (auto& t : pool) t.join();
  return hist;
}

struct Totals {
  double grad = 0.0;
  double hess = 0.0;
  std::size_t count = 0;
};

Totals totals_of(const Histogram& hist, const BinIndex& bins, const Layout& layout) {
  Totals t;
  if (bins.features == 0) return t;
  for (std::size_t b = 0; b < bins.bin_count(0); ++b) {
    const HistBin& s = hist[layout.offset[0] + b];
    t.grad += s.grad;
    t.hess += s.hess;
    t.count += s.count;
  }
  return t;
}

double leaf_score(double grad, double hess, double lambda) {
  return grad * grad / std::max(hess + lambda, kMinDenominator);
}

bool clearly_better(double gain, double best) { return gain > best + kTieTolerance * std::abs(best); }

std::optional<SplitCandidate> best_from_histogram(const Histogram& hist, const Totals& parent, const BinIndex& bins,
                                                  const Layout& layout, double lambda) {
  std::optional<SplitCandidate> best;
  if (parent.count < 2) return best;
  const double min_gain = kTieTolerance * leaf_score(parent.grad, parent.hess, lambda);
  for (std::size_t f = 0; f < bins.features; ++f) {
    double gl = 0.0, hl = 0.0;
    std::size_t nl = 0;
    const std::size_t nb = bins.bin_count(f);
    for (std::size_t b = 0; b + 1 < nb; ++b) {
      const HistBin& s = hist[layout.offset[f] + b];
      gl += s.grad;
      hl += s.hess;
      nl += s.count;
      if (nl == 0) continue;
      if (nl == parent.count) break;
      const double gain = split_gain(gl, hl, parent.grad, parent.hess, lambda);
      if (!(gain > min_gain) || !(gain > 0.0)) continue;
      if (!best || clearly_better(gain, best->gain)) {
        SplitCandidate c;
        c.feature = static_cast<std::uint32_t>(f);
        c.bin = static_cast<std::uint32_t>(b);
        c.gain = gain;
        c.grad_left = gl;
        c.hess_left = hl;
        c.grad_right = parent.grad - gl;
        c.hess_right = parent.hess - hl;
        c.count_left = nl;
        c.count_right = parent.count - nl;
        best = c;
      }
    }
  }
  return best;
}

}  // namespace

// ------------------------------------------------------------------ binning

std::uint8_t bin_of(std::span<const double> thresholds, double value) {
  return static_cast<std::uint8_t>(std::lower_bound(thresholds.begin(), thresholds.end(), value) - thresholds.begin());
}

BinIndex bin_features(FeatureView x, int max_bins, std::size_t sample_rows, std::uint64_t seed) {
  if (max_bins < 2 || max_bins > kMaxBins) throw InvalidArgument("max_bins must lie in [2, 256]");
  BinIndex index;
  index.rows = x.rows;
  index.features = x.cols;
  index.thresholds.resize(x.cols);
  index.bins.resize(x.rows * x.cols);

  std::vector<std::uint32_t> sample;
  if (x.rows > sample_rows && sample_rows > 0) {
    Rng rng(seed);
    sample = rng.sample_without_replacement(static_cast<std::uint32_t>(x.rows), static_cast<std::uint32_t>(sample_rows));
  } else {
    sample.resize(x.rows);
    std::iota(sample.begin(), sample.end(), 0u);
  }

  const auto bins = static_cast<std::size_t>(max_bins);
  std::vector<float> values(sample.size());
  for (std::size_t f = 0; f < x.cols; ++f) {
    for (std::size_t i = 0; i < sample.size(); ++i) {
      values[i] = x(sample[i], f);
      if (!std::isfinite(values[i])) throw InvalidArgument("cannot bin non-finite feature values");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    std::vector<double>& t = index.thresholds[f];

    std::vector<float> distinct;
    std::unique_copy(values.begin(), values.end(), std::back_inserter(distinct));
    if (distinct.size() <= bins) {
      for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        t.push_back(0.5 * (static_cast<double>(distinct[i]) + static_cast<double>(distinct[i + 1])));
      }
    } else {
      for (std::size_t k = 1; k < bins; ++k) {
        std::size_t cut = k * n / bins;
        // Equal values never straddle a threshold: move the cut past the run.
        while (cut < n && values[cut] == values[cut - 1]) ++cut;
        if (cut >= n) break;
        const double th = 0.5 * (static_cast<double>(values[cut - 1]) + static_cast<double>(values[cut]));
        if (t.empty() || th > t.back()) t.push_back(th);
      }
    }
  }

  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t f = 0; f < x.cols; ++f) {
      const float v = x(i, f);
      if (!std::isfinite(v)) throw InvalidArgument("cannot bin non-finite feature values");
      index.bins[i * x.cols + f] = bin_of(index.thresholds[f], v);
    }
  }
  return index;
}

// ------------------------------------------------------------ loss, splits

double logistic_loss(double margin, double y) {
  // log(1 + e^m) - y m, evaluated without overflow.
  const double softplus = margin > 0 ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
  return softplus - y * margin;
}

GradHess logistic_grad_hess(std::span<const double> margins, std::span<const Label> labels) {
  if (margins.size() != labels.size()) throw InvalidArgument("margins and labels differ in length");
  GradHess gh;
  gh.grad.resize(margins.size());
  gh.hess.resize(margins.size());
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const double m = margins[i];
    if (!std::isfinite(m)) throw InvalidArgument("margins must be finite");
    const double p = m >= 0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
    const double y = labels[i] == Label::Water ? 1.0 : 0.0;
    gh.grad[i] = p - y;
    gh.hess[i] = p * (1.0 - p);
  }
  return gh;
}

double split_gain(double grad_left, double hess_left, double grad, double hess, double lambda) {
  const double gr = grad - grad_left;
  const double hr = hess - hess_left;
  return 0.5 * (leaf_score(grad_left, hess_left, lambda) + leaf_score(gr, hr, lambda) - leaf_score(grad, hess, lambda));
}

std::optional<SplitCandidate> find_best_split(std::span<const std::uint32_t> rows, const GradHess& gh,
                                              const BinIndex& bins, double lambda) {
  const Layout layout(bins);
  const Histogram hist = build_histogram(rows, gh, bins, layout, 1);
  return best_from_histogram(hist, totals_of(hist, bins, layout), bins, layout, lambda);
}

// --------------------------------------------------------------------- tree

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double Tree::predict(std::span<const float> row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

double Tree::predict_binned(const BinIndex& bins, std::size_t row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(bins.at(row, static_cast<std::size_t>(n.feature)) <= n.bin ? n.left : n.right);
  }
  return nodes[i].value;
}

namespace {

struct Frontier {
  std::int32_t node;
  std::size_t begin, end;
  Totals totals;
  Histogram hist;
  std::optional<SplitCandidate> split;
};

Tree grow_tree(std::span<const std::uint32_t> rows, const GradHess& gh, const BinIndex& bins, int max_leaves,
               double lambda, int threads) {
  if (max_leaves < 2) throw InvalidArgument("max_leaves must be at least 2");
  const Layout layout(bins);
  std::vector<std::uint32_t> order(rows.begin(), rows.end());
  std::vector<std::uint32_t> scratch(order.size());
  Tree tree;
  tree.nodes.emplace_back();

  std::vector<Frontier> leaves;
  {
    Frontier root{0, 0, order.size(), {}, build_histogram(order, gh, bins, layout, threads), std::nullopt};
    root.totals = totals_of(root.hist, bins, layout);
    if (bins.features == 0) {
      for (std::uint32_t r : order) {
        root.totals.grad += gh.grad[r];
        root.totals.hess += gh.hess[r];
      }
      root.totals.count = order.size();
    }
    root.split = best_from_histogram(root.hist, root.totals, bins, layout, lambda);
    leaves.push_back(std::move(root));
  }

  while (static_cast<int>(leaves.size()) < max_leaves) {
    std::size_t pick = leaves.size();
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      if (!leaves[i].split) continue;
      if (pick == leaves.size() || leaves[i].split->gain > leaves[pick].split->gain) pick = i;
    }
    if (pick == leaves.size()) break;

    Frontier parent = std::move(leaves[pick]);
    const SplitCandidate s = *parent.split;

    // Stable partition of the parent's rows: left rows first.
    std::size_t nl = 0, nr = 0;
    for (std::size_t i = parent.begin; i < parent.end; ++i) {
      const std::uint32_t r = order[i];
      if (bins.at(r, s.feature) <= s.bin) {
        order[parent.begin + nl++] = r;
      } else {
        scratch[nr++] = r;
      }
    }
    std::copy_n(scratch.begin(), nr, order.begin() + static_cast<std::ptrdiff_t>(parent.begin + nl));

    const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
    TreeNode& node = tree.nodes[static_cast<std::size_t>(parent.node)];
    node.feature = static_cast<std::int32_t>(s.feature);
    node.bin = s.bin;
    node.threshold = bins.thresholds[s.feature][s.bin];
    node.gain = s.gain;
    node.left = left_id;
    node.right = left_id + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    Frontier left{left_id, parent.begin, parent.begin + nl, {s.grad_left, s.hess_left, nl}, {}, std::nullopt};
    Frontier right{left_id + 1, parent.begin + nl, parent.end, {s.grad_right, s.hess_right, nr}, {}, std::nullopt};
    Frontier& small = nl <= nr ? left : right;
    Frontier& large = nl <= nr ? right : left;
    small.hist = build_histogram(std::span<const std::uint32_t>(order).subspan(small.begin, small.end - small.begin),
                                 gh, bins, layout, threads);
    large.hist = std::move(parent.hist);
    for (std::size_t k = 0; k < layout.total; ++k) {
      HistBin& l = large.hist[k];
      const HistBin& sm = small.hist[k];
      l.count -= sm.count;
      if (l.count == 0) {
        l.grad = 0.0;
        l.hess = 0.0;
      } else {
        l.grad -= sm.grad;
        l.hess -= sm.hess;
      }
    }
    left.split = best_from_histogram(left.hist, left.totals, bins, layout, lambda);
    right.split = best_from_histogram(right.hist, right.totals, bins, layout, lambda);
    leaves[pick] = std::move(left);
    leaves.push_back(std::move(right));
  }

  for (const Frontier& leaf : leaves) {
    tree.nodes[static_cast<std::size_t>(leaf.node)].value =
        -leaf.totals.grad / std::max(leaf.totals.hess + lambda, kMinDenominator);
  }
  return tree;
}

}  // namespace

Tree grow_tree_leafwise(std::span<const std::uint32_t> rows, const GradHess& gh, const BinIndex& bins, int max_leaves,
                        double lambda) {
  return grow_tree(rows, gh, bins, max_leaves, lambda, 1);
}

// -------------------------------------------------------------------- model

nlohmann::json to_json(const GBDTParams& p) {
  return {{"n_trees", p.n_trees},
          {"max_leaves", p.max_leaves},
          {"lambda", p.lambda},
          {"learning_rate", p.learning_rate},
          {"subsample_size", p.subsample_size},
          {"max_bins", p.max_bins},
          {"bin_sample_rows", p.bin_sample_rows},
          {"seed", p.seed}};
}

GBDTParams gbdt_params_from_json(const nlohmann::json& j) {
  GBDTParams p;
  p.n_trees = j.value("n_trees", p.n_trees);
  p.max_leaves = j.value("max_leaves", p.max_leaves);
  p.lambda = j.value("lambda", p.lambda);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.subsample_size = j.value("subsample_size", p.subsample_size);
  p.max_bins = j.value("max_bins", p.max_bins);
  p.bin_sample_rows = j.value("bin_sample_rows", p.bin_sample_rows);
  p.seed = j.value("seed", p.seed);
  p.threads = j.value("threads", p.threads);
  return p;
}

GBDTModel::GBDTModel(double base_score, std::vector<Tree> trees, GBDTParams params, std::size_t dims,
                     std::vector<std::vector<double>> bin_thresholds, std::vector<double> training_loss)
    : base_score_(base_score),
      trees_(std::move(trees)),
      params_(params),
      dims_(dims),
      bin_thresholds_(std::move(bin_thresholds)),
      training_loss_(std::move(training_loss)) {
  for (const Tree& t : trees_) {
    if (t.nodes.empty()) throw InvalidArgument("GBDT tree without nodes");
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf()) continue;
      const auto size = static_cast<std::int32_t>(t.nodes.size());
      if (static_cast<std::size_t>(n.feature) >= dims_ || n.left <= 0 || n.right <= 0 || n.left >= size ||
          n.right >= size) {
        throw InvalidArgument("GBDT tree node out of range");
      }
    }
  }
}

std::vector<double> GBDTModel::decision_function(FeatureView x) const {
  check_dimensionality(x);
  std::vector<double> out(x.rows);
  const double eta = params_.learning_rate;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    double sum = 0.0;
    for (const Tree& t : trees_) sum += t.predict(row);
    out[i] = base_score_ + eta * sum;
  }
  return out;
}

std::vector<std::array<double, 2>> GBDTModel::predict_proba(FeatureView x) const {
  const auto m = decision_function(x);
  std::vector<std::array<double, 2>> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double p = m[i] >= 0 ? 1.0 / (1.0 + std::exp(-m[i])) : std::exp(m[i]) / (1.0 + std::exp(m[i]));
    out[i] = {1.0 - p, p};
  }
  return out;
}

nlohmann::json tree_to_json(const Tree& tree) {
  auto node_json = [&](auto&& self, std::size_t i) -> nlohmann::json {
    const TreeNode& n = tree.nodes[i];
    if (n.is_leaf()) return {{"leaf", n.value}};
    return {{"feature", n.feature},
            {"bin", n.bin},
            {"threshold", n.threshold},
            {"gain", n.gain},
            {"left", self(self, static_cast<std::size_t>(n.left))},
            {"right", self(self, static_cast<std::size_t>(n.right))}};
  };
  return node_json(node_json, 0);
}

Tree tree_from_json(const nlohmann::json& j) {
  Tree tree;
  auto add = [&](auto&& self, const nlohmann::json& node) -> std::int32_t {
    const auto id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (node.contains("leaf")) {
      tree.nodes[static_cast<std::size_t>(id)].value = node.at("leaf").get<double>();
      return id;
    }
    TreeNode n;
    n.feature = node.at("feature").get<std::int32_t>();
    if (n.feature < 0) throw InvalidArgument("negative feature id in tree");
    n.bin = node.at("bin").get<std::uint32_t>();
    n.threshold = node.at("threshold").get<double>();
    n.gain = node.value("gain", 0.0);
    n.left = self(self, node.at("left"));
    n.right = self(self, node.at("right"));
    tree.nodes[static_cast<std::size_t>(id)] = n;
    return id;
  };
  add(add, j);
  return tree;
}

nlohmann::json GBDTModel::to_json() const {
  nlohmann::json j = {{"format", "floodpix-model"}, {"version", kFormatVersion}, {"kind", "gbdt"}};
  j["dims"] = dims_;
  j["base_score"] = base_score_;
  j["params"] = gbdt::to_json(params_);
  j["bin_thresholds"] = bin_thresholds_;
  j["training_loss"] = training_loss_;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const Tree& t : trees_) trees.push_back(tree_to_json(t));
  return j;
}

GBDTModel GBDTModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "floodpix-model" || j.value("kind", std::string{}) != "gbdt") {
    throw InvalidArgument("not a GBDT model document");
  }
  if (j.value("version", 0) != kFormatVersion) throw InvalidArgument("unsupported model document version");
  std::vector<Tree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t));
  return GBDTModel(j.at("base_score").get<double>(), std::move(trees), gbdt_params_from_json(j.at("params")),
                   j.at("dims").get<std::size_t>(),
                   j.value("bin_thresholds", std::vector<std::vector<double>>{}),
                   j.value("training_loss", std::vector<double>{}));
}

GBDTModel fit_gbdt(FeatureView x, std::span<const Label> y, const GBDTParams& params) {
  if (x.rows != y.size()) throw InvalidArgument("feature rows and labels differ in length");
  if (params.n_trees < 0) throw InvalidArgument("n_trees must be non-negative");
  if (params.max_leaves < 2) throw InvalidArgument("max_leaves must be at least 2");
  if (!(params.lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (!(params.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be non-negative");
  if (x.rows > std::numeric_limits<std::uint32_t>::max()) throw InvalidArgument("too many rows for GBDT");
  std::size_t n_water = 0;
  for (Label l : y) {
    if (l == Label::NoData) throw InvalidArgument("training labels must be Dry or Water");
    n_water += l == Label::Water ? 1 : 0;
  }
  const std::size_t n_dry = y.size() - n_water;
  if (n_water == 0 || n_dry == 0) throw FitError("training data contains a single class");

  const BinIndex bins = bin_features(x, params.max_bins, params.bin_sample_rows, params.seed);
  const double base = std::clamp(std::log(static_cast<double>(n_water) / static_cast<double>(n_dry)), -10.0, 10.0);

  const std::size_t n = x.rows;
  std::vector<double> margins(n, base);
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  const bool subsample = params.subsample_size > 0 && params.subsample_size < n;
  Rng rng(params.seed ^ kSubsampleStream);
  std::vector<std::uint32_t> pool;
  std::vector<std::uint32_t> drawn;
  if (subsample) pool = all;

  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(params.n_trees));
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(params.n_trees));
  for (int it = 0; it < params.n_trees; ++it) {
    const GradHess gh = logistic_grad_hess(margins, y);
    std::span<const std::uint32_t> rows = all;
    if (subsample) {
      // Partial Fisher-Yates over a persistent pool: each prefix is a
      // uniform sample without replacement.
      const std::size_t k = params.subsample_size;
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pool[i], pool[j]);
      }
      drawn.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(drawn.begin(), drawn.end());
      rows = drawn;
    }
    Tree tree = grow_tree(rows, gh, bins, params.max_leaves, params.lambda, params.threads);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      margins[i] += params.learning_rate * tree.predict_binned(bins, i);
      loss += logistic_loss(margins[i], y[i] == Label::Water ? 1.0 : 0.0);
    }
    losses.push_back(loss / static_cast<double>(n));
    trees.push_back(std::move(tree));
  }
  return GBDTModel(base, std::move(trees), params, x.cols, bins.thresholds, std::move(losses));
}

GBDTPrediction predict_gbdt(const GBDTModel& model, FeatureView x) {
  GBDTPrediction out;
  out.margins = model.decision_function(x);
  out.labels.resize(out.margins.size());
  for (std::size_t i = 0; i < out.margins.size(); ++i) {
    out.labels[i] = out.margins[i] > 0.0 ? Label::Water : Label::Dry;
  }
  return out;
}

std::vector<int> max_leaves_grid(std::size_t dims) {
  if (dims == 0) throw InvalidArgument("feature space has no dimensions");
  if (dims <= 2) return {2, 4};
  if (dims == 3) return {4, 8};
  if (dims == 4) return {4, 8, 16};
  if (dims == 5) return {8, 16, 32};
  if (dims <= 7) return {16, 32, 64};
  return {32, 64, 128};
}

}  // namespace floodpix::gbdt
