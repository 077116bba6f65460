#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advmap/attacks/adversarial_set.hpp"
#include "advmap/attacks/norms.hpp"
#include "advmap/core/error.hpp"
#include "advmap/core/rng.hpp"

namespace advmap::regions {

inline constexpr double kDefaultTau = 0.036;

struct PixelInterval {
  std::size_t index = 0;
  float lo = 0.0f, hi = 0.0f;

  double size() const { return static_cast<double>(hi) - static_cast<double>(lo); }
  friend bool operator==(const PixelInterval&, const PixelInterval&) = default;
};

/// Sort by size descending, ties by lower pixel index.
inline void rank_intervals(std::vector<PixelInterval>& v) {
  std::sort(v.begin(), v.end(), [](const PixelInterval& a, const PixelInterval& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.index < b.index;
  });
}

/// Per-pixel [min, max] over the set, for every pixel some example perturbs.
/// PW sets use [0, 1] for their pixels since the attack only writes extremes.
inline std::vector<PixelInterval> compute_intervals(const attacks::AdversarialSet& set) {
  require(!set.empty(), ErrorCode::kInvalidArgument, "interval construction needs a nonempty set");
  const std::size_t h = set.clean.size();
  std::vector<PixelInterval> out;
  for (std::size_t i = 0; i < h; ++i) {
    bool perturbed = false;
    float lo = 1.0f, hi = 0.0f;
    for (const auto& e : set.examples) {
      lo = std::min(lo, e.pixels[i]);
      hi = std::max(hi, e.pixels[i]);
      perturbed = perturbed || attacks::is_perturbed(e.pixels[i], set.clean.pixels[i]);
    }
    if (!perturbed) continue;
    if (set.kind == attacks::AttackKind::kPw) lo = 0.0f, hi = 1.0f;
    out.push_back({i, lo, hi});
  }
  rank_intervals(out);
  return out;
}

/// Largest b whose b-th ranked size is at least tau (1 if none is).
inline std::size_t choose_b(const std::vector<PixelInterval>& ranked, double tau) {
  require(!ranked.empty(), ErrorCode::kInvalidArgument, "no intervals to choose from");
  std::size_t b = 0;
  while (b < ranked.size() && ranked[b].size() >= tau) ++b;
  return std::max<std::size_t>(b, 1);
}

enum class BaseMode { kMedian, kClean };

inline std::string_view base_mode_name(BaseMode m) { return m == BaseMode::kMedian ? "median" : "clean"; }

inline BaseMode parse_base_mode(std::string_view s) {
  if (s == "median") return BaseMode::kMedian;
  if (s == "clean") return BaseMode::kClean;
  throw Error(ErrorCode::kInvalidArgument, "unknown base mode: " + std::string(s));
}

/// R_k(t): the b widest intervals vary; every other pixel is held at `base`.
struct HyperRectangle {
  std::vector<PixelInterval> selected;
  std::vector<float> base;  // full image; selected entries hold the midpoint
  attacks::AttackKind kind = attacks::AttackKind::kFgsm;
  int true_class = -1, target_class = -1;
  std::size_t target_model = 0;
  std::size_t m = 0;  // perturbed pixels available
  double smallest_size = 0.0;
  BaseMode mode = BaseMode::kMedian;

  std::size_t b() const { return selected.size(); }
  std::size_t dim() const { return base.size(); }

  std::vector<float> lower() const {
    auto v = base;
    for (const auto& s : selected) v[s.index] = s.lo;
    return v;
  }

  std::vector<float> upper() const {
    auto v = base;
    for (const auto& s : selected) v[s.index] = s.hi;
    return v;
  }

  bool contains(std::span<const float> x) const {
    if (x.size() != base.size()) return false;
    const auto lo = lower(), hi = upper();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }

  /// Table row label, e.g. "CW2 280d 1->2".
  std::string label() const {
    return std::string(attacks::attack_name(kind)) + " " + std::to_string(b()) + "d " +
           std::to_string(true_class) + "->" + std::to_string(target_class);
  }
};

inline float median_of(std::vector<float> v) {
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const float upper = v[mid];
  if (n % 2 == 1) return upper;
  const float lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return lower + (upper - lower) / 2;
}

inline HyperRectangle build_rectangle(const attacks::AdversarialSet& set, const std::vector<PixelInterval>& ranked,
                                      std::size_t b, BaseMode mode = BaseMode::kMedian) {
  require(b >= 1 && b <= ranked.size(), ErrorCode::kInvalidArgument,
          "b = " + std::to_string(b) + " outside [1, " + std::to_string(ranked.size()) + "]");
  HyperRectangle rect;
  rect.kind = set.kind;
  rect.true_class = set.true_class;
  rect.target_class = set.target_class;
  rect.target_model = set.target_model;
  rect.m = ranked.size();
  rect.mode = mode;
  rect.selected.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(b));
  rect.smallest_size = rect.selected.back().size();
  rect.base = set.clean.pixels;
  if (mode == BaseMode::kMedian) {
    std::vector<float> column(set.size());
    for (auto it = ranked.begin() + static_cast<std::ptrdiff_t>(b); it != ranked.end(); ++it) {
      for (std::size_t e = 0; e < set.size(); ++e) column[e] = set.examples[e].pixels[it->index];
      rect.base[it->index] = median_of(column);
    }
  }
  for (const auto& s : rect.selected) rect.base[s.index] = s.lo + (s.hi - s.lo) / 2;
  return rect;
}

/// n images with the selected coordinates uniform in [lo, hi].
inline std::vector<data::ImageVec> sample(const HyperRectangle& rect, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::kInvalidArgument, "sample count must be >= 1");
  CounterRng rng(seed);
  std::vector<data::ImageVec> out(n);
  for (auto& im : out) {
    im.pixels = rect.base;
    for (const auto& s : rect.selected)
      im.pixels[s.index] = s.hi > s.lo ? static_cast<float>(rng.uniform(s.lo, s.hi)) : s.lo;
  }
  return out;
}

struct BallSampleStats {
  std::size_t draws = 0;
  std::size_t shrunk = 0;  // samples pulled radially into the ball after max_draws rejections
};

/// Uniform samples from the rectangle restricted to the L2 ball of `radius`
/// around `center`, by rejection. A sample that exhausts `max_draws` is moved
/// along the segment toward `center` until it fits; such samples may leave
/// the rectangle and are counted in `stats`.
inline std::vector<data::ImageVec> sample_in_ball(const HyperRectangle& rect, std::size_t n, std::uint64_t seed,
                                                  std::span<const float> center, double radius,
                                                  std::size_t max_draws = 200, BallSampleStats* stats = nullptr) {
  require(n >= 1, ErrorCode::kInvalidArgument, "sample count must be >= 1");
  require(center.size() == rect.dim(), ErrorCode::kShapeMismatch, "ball center size mismatch");
  CounterRng rng(seed);
  BallSampleStats local;
  std::vector<data::ImageVec> out(n);
  for (auto& im : out) {
    bool inside = false;
    for (std::size_t k = 0; k < max_draws && !inside; ++k) {
      im.pixels = rect.base;
      for (const auto& s : rect.selected)
        im.pixels[s.index] = s.hi > s.lo ? static_cast<float>(rng.uniform(s.lo, s.hi)) : s.lo;
      ++local.draws;
      inside = attacks::l2_distance(im.span(), center) <= radius;
    }
    if (inside) continue;
    ++local.shrunk;
    for (double scale = radius / attacks::l2_distance(im.span(), center);; scale *= 1.0 - 1e-6) {
      auto moved = im.pixels;
      for (std::size_t i = 0; i < moved.size(); ++i)
        moved[i] = static_cast<float>(center[i] + scale * (static_cast<double>(im.pixels[i]) - center[i]));
      if (attacks::l2_distance(moved, center) <= radius) {
        im.pixels = std::move(moved);
        break;
      }
    }
  }
  if (stats) *stats = local;
  return out;
}

inline nlohmann::json rectangle_json(const HyperRectangle& rect) {
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& s : rect.selected) sel.push_back({s.index, s.lo, s.hi});
  return {{"attack", std::string(attacks::attack_name(rect.kind))},
          {"true_class", rect.true_class},
          {"target_class", rect.target_class},
          {"target_model", rect.target_model},
          {"b", rect.b()},
          {"m", rect.m},
          {"smallest_size", rect.smallest_size},
          {"base_mode", std::string(base_mode_name(rect.mode))},
          {"selected", sel},
          {"base", rect.base}};
}

inline HyperRectangle rectangle_from_json(const nlohmann::json& j) {
  HyperRectangle rect;
  rect.kind = attacks::parse_attack_kind(j.at("attack").get<std::string>());
  rect.true_class = j.at("true_class");
  rect.target_class = j.at("target_class");
  rect.target_model = j.at("target_model");
  rect.m = j.at("m");
  rect.smallest_size = j.at("smallest_size");
  rect.mode = parse_base_mode(j.at("base_mode").get<std::string>());
  for (const auto& s : j.at("selected")) rect.selected.push_back({s.at(0), s.at(1), s.at(2)});
  rect.base = j.at("base").get<std::vector<float>>();
  return rect;
}

}  // namespace advmap::regions
