// Improved Lee sigma speckle filter for L-look intensity SAR data.
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "floodpix/error.hpp"
#include "floodpix/features.hpp"

namespace floodpix::features {
namespace {

using boost::math::gamma_p;
using boost::math::gamma_p_inv;

void check_window(int w, const char* what) {
  if (w < 1 || w % 2 == 0) {
    throw InvalidArgument(std::string(what) + " must be a positive odd size, got " + std::to_string(w));
  }
}

struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  int n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return sum / n; }
  double variance() const { return std::max(0.0, sum_sq / n - mean() * mean()); }
};

// Minimum mean-square-error estimate of the noise-free value given the local
// moments and the relative speckle variance.
double mmse(double centre, const Moments& m, double speckle_var) {
  const double mean = m.mean();
  const double var_z = m.variance();
  if (var_z <= 0.0) return mean;
  const double var_x = std::max(0.0, (var_z - mean * mean * speckle_var) / (1.0 + speckle_var));
  const double b = std::clamp(var_x / var_z, 0.0, 1.0);
  return mean + b * (centre - mean);
}

}  // namespace

SigmaRange speckle_sigma_range(double looks, double sigma_range) {
  if (!(looks > 0.0)) throw InvalidArgument("number of looks must be positive");
  if (!(sigma_range > 0.0 && sigma_range < 1.0)) throw InvalidArgument("sigma range must lie in (0, 1)");
  const double L = looks;
  // Speckle ~ Gamma(L, 1/L). For a candidate lower bound the upper bound is
  // fixed by the enclosed probability; the lower bound is then chosen so the
  // truncated distribution keeps unit mean.
  auto cdf = [&](double a, double x) { return x <= 0.0 ? 0.0 : gamma_p(a, L * x); };
  auto upper_for = [&](double lower) {
    const double p = cdf(L, lower) + sigma_range;
    return gamma_p_inv(L, std::min(p, 1.0 - 1e-15)) / L;
  };
  auto mean_gap = [&](double lower) {
    const double upper = upper_for(lower);
    return cdf(L + 1.0, upper) - cdf(L + 1.0, lower) - sigma_range;
  };
  double lo = 0.0;
  double hi = gamma_p_inv(L, 1.0 - sigma_range) / L;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_gap(mid) < 0.0 ? lo : hi) = mid;
  }
  SigmaRange r;
  r.lower = 0.5 * (lo + hi);
  r.upper = upper_for(r.lower);
  const double second = (L + 1.0) / L * (cdf(L + 2.0, r.upper) - cdf(L + 2.0, r.lower)) / sigma_range;
  r.eta = std::sqrt(std::max(0.0, second - 1.0));
  return r;
}

FloatGrid lee_sigma_filter(const FloatGrid& in, const LeeSigmaParams& params) {
  check_window(params.window, "window");
  check_window(params.target_window, "target window");
  if (params.target_window > params.window) throw InvalidArgument("target window larger than window");

  const SigmaRange range = speckle_sigma_range(params.looks, params.sigma_range);
  const double speckle_var = 1.0 / params.looks;
  const double eta_var = range.eta * range.eta;
  const int W = in.width;
  const int H = in.height;
  FloatGrid out(W, H);
  if (in.size() == 0) return out;

  // 98th percentile of the finite values, for point target detection.
  std::vector<float> finite;
  finite.reserve(in.size());
  for (float v : in.values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  double z98 = std::numeric_limits<double>::infinity();
  if (!finite.empty()) {
    const auto k = static_cast<std::size_t>(std::ceil(0.98 * static_cast<double>(finite.size()))) - 1;
    std::nth_element(finite.begin(), finite.begin() + static_cast<std::ptrdiff_t>(k), finite.end());
    z98 = finite[k];
  }

  auto sample = [&](int x, int y) { return in.at(std::clamp(x, 0, W - 1), std::clamp(y, 0, H - 1)); };
  const int half = params.window / 2;
  const int target_half = params.target_window / 2;

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double z = in.at(x, y);
      if (!std::isfinite(z)) {
        out.at(x, y) = static_cast<float>(z);
        continue;
      }
      int bright = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (sample(x + dx, y + dy) > z98) ++bright;
        }
      }
      if (bright >= params.point_target_count) {
        out.at(x, y) = static_cast<float>(z);
        continue;
      }

      Moments local;
      for (int dy = -target_half; dy <= target_half; ++dy) {
        for (int dx = -target_half; dx <= target_half; ++dx) {
          const double v = sample(x + dx, y + dy);
          if (std::isfinite(v)) local.add(v);
        }
      }
      const double prior = mmse(z, local, speckle_var);
      const double lower = range.lower * prior;
      const double upper = range.upper * prior;

      Moments selected;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          const double v = sample(x + dx, y + dy);
          if (std::isfinite(v) && v >= lower && v <= upper) selected.add(v);
        }
      }
      // A lone pixel in its own range carries no neighbourhood evidence; keep
      // the a priori estimate.
      const double value = selected.n >= 2 ? mmse(z, selected, eta_var) : prior;
      out.at(x, y) = static_cast<float>(value);
    }
  }
  return out;
}

FloatGrid lee_sigma_filter_db(const FloatGrid& db, const LeeSigmaParams& params) {
  FloatGrid linear(db.width, db.height);
  for (std::size_t i = 0; i < db.size(); ++i) linear[i] = static_cast<float>(std::pow(10.0, db[i] / 10.0));
  FloatGrid filtered = lee_sigma_filter(linear, params);
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    filtered[i] = std::isfinite(db[i]) ? static_cast<float>(10.0 * std::log10(filtered[i])) : db[i];
  }
  return filtered;
}

}  // namespace floodpix::features
