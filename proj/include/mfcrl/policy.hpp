#ifndef MFCRL_POLICY_HPP_
#define MFCRL_POLICY_HPP_

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mfcrl/errors.hpp"
#include "mfcrl/random.hpp"
#include "mfcrl/sim.hpp"

namespace mfcrl {

namespace learner_kind {
inline constexpr std::string_view kTileQ = "tile_q";
inline constexpr std::string_view kGotoPose = "goto_pose";
inline constexpr std::string_view kConstant = "constant";
}  // namespace learner_kind

/// A subtask policy as a plain value: learner kind, action limits and an
/// opaque parameter block interpreted by the kind.
///
/// `fault_rate` is a verification instrument: with that probability per
/// episode (decided from the episode seed) the controller stalls and only
/// ever commands zero velocity.
struct PolicyHandle {
  std::string learner_kind;
  ActionLimits limits;
  double fault_rate = 0.0;
  std::vector<double> parameters;

  friend bool operator==(const PolicyHandle&, const PolicyHandle&) = default;
};

// ---------------------------------------------------------------------------
// Tile-coded action-value table used by the reference learner.
//
// State features are distance to the goal (square-root scaled, so resolution
// concentrates near the goal), bearing to the goal and heading relative to the
// goal heading. The angle dimensions wrap. Actions are a grid of linear and
// angular velocity levels spanning the action limits.

struct TileLayout {
  int tilings = 8;
  int distance_bins = 12;
  int angle_bins = 12;
  double max_distance = 16.0;
  int v_levels = 3;
  int w_levels = 5;

  static constexpr std::size_t kHeaderSize = 6;

  [[nodiscard]] int actions() const { return v_levels * w_levels; }
  [[nodiscard]] std::size_t tiles_per_tiling() const {
    return static_cast<std::size_t>(distance_bins + 1) * angle_bins * angle_bins;
  }
  [[nodiscard]] std::size_t weight_count() const {
    return static_cast<std::size_t>(tilings) * tiles_per_tiling() * actions();
  }

  void write(std::vector<double>& out) const {
    out.insert(out.end(), {double(tilings), double(distance_bins), double(angle_bins), max_distance,
                           double(v_levels), double(w_levels)});
  }

  static TileLayout read(std::span<const double> params) {
    if (params.size() < kHeaderSize) throw PolicyFormatError("tile_q parameter block too short");
    TileLayout l;
    l.tilings = static_cast<int>(params[0]);
    l.distance_bins = static_cast<int>(params[1]);
    l.angle_bins = static_cast<int>(params[2]);
    l.max_distance = params[3];
    l.v_levels = static_cast<int>(params[4]);
    l.w_levels = static_cast<int>(params[5]);
    if (l.tilings < 1 || l.distance_bins < 1 || l.angle_bins < 2 || !(l.max_distance > 0.0) ||
        l.v_levels < 1 || l.w_levels < 1 || params.size() != kHeaderSize + l.weight_count()) {
      throw PolicyFormatError("tile_q parameter block is inconsistent with its layout");
    }
    return l;
  }

  /// Flat weight offsets (one per tiling) of the active tiles for `obs`.
  void active_tiles(const Observation& obs, std::span<std::size_t> out) const {
    const double d = std::min(std::hypot(obs.goal_dx, obs.goal_dy), max_distance);
    const double fd = std::sqrt(d / max_distance) * distance_bins;
    const double fb = (wrap_angle(obs.bearing_to_goal) + kPi) / kTwoPi * angle_bins;
    const double fh = (wrap_angle(obs.relative_heading) + kPi) / kTwoPi * angle_bins;
    for (int t = 0; t < tilings; ++t) {
      const double off = static_cast<double>(t) / tilings;
      // Asymmetric displacement across dimensions (1, 3, 5) as usual for tile coding.
      const int id = std::min(static_cast<int>(fd + off), distance_bins);
      const int ib = static_cast<int>(std::floor(fb + std::fmod(3.0 * off, 1.0))) % angle_bins;
      const int ih = static_cast<int>(std::floor(fh + std::fmod(5.0 * off, 1.0))) % angle_bins;
      const std::size_t tile =
          (static_cast<std::size_t>(id) * angle_bins + static_cast<std::size_t>(ib)) * angle_bins +
          static_cast<std::size_t>(ih);
      out[static_cast<std::size_t>(t)] = (static_cast<std::size_t>(t) * tiles_per_tiling() + tile) * actions();
    }
  }

  [[nodiscard]] Action action(int index, const ActionLimits& lim) const {
    const int iv = index / w_levels;
    const int iw = index % w_levels;
    auto level = [](double lo, double hi, int i, int n) {
      return n == 1 ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    return {level(lim.v_min, lim.v_max, iv, v_levels), level(lim.w_min, lim.w_max, iw, w_levels)};
  }
};

inline constexpr int kMaxTilings = 64;

/// Q(s, a) for every action, summed over the active tiles.
inline void tile_q_values(const TileLayout& layout, std::span<const double> weights, const Observation& obs,
                          std::span<double> q) {
  std::array<std::size_t, kMaxTilings> tiles{};
  layout.active_tiles(obs, std::span(tiles).first(static_cast<std::size_t>(layout.tilings)));
  std::fill(q.begin(), q.end(), 0.0);
  for (int t = 0; t < layout.tilings; ++t) {
    const double* w = weights.data() + tiles[static_cast<std::size_t>(t)];
    for (int a = 0; a < layout.actions(); ++a) q[static_cast<std::size_t>(a)] += w[a];
  }
}

inline int argmax(std::span<const double> q) {
  return static_cast<int>(std::distance(q.begin(), std::max_element(q.begin(), q.end())));
}

// ---------------------------------------------------------------------------
// Constructors for the built-in kinds.

inline PolicyHandle make_tile_q_policy(const ActionLimits& limits, const TileLayout& layout = {}) {
  if (layout.tilings > kMaxTilings) throw InvalidArgument("too many tilings");
  PolicyHandle p;
  p.learner_kind = learner_kind::kTileQ;
  p.limits = limits;
  layout.write(p.parameters);
  p.parameters.resize(TileLayout::kHeaderSize + layout.weight_count(), 0.0);
  return p;
}

/// Scripted go-to-pose controller: pure pursuit of a point on the goal's
/// approach line, `lookahead` metres ahead of the robot's projection onto it.
/// Parameters: heading gain, lookahead.
inline PolicyHandle make_goto_pose_policy(const ActionLimits& limits, double heading_gain = 2.0,
                                          double lookahead = 2.0) {
  PolicyHandle p;
  p.learner_kind = learner_kind::kGotoPose;
  p.limits = limits;
  p.parameters = {heading_gain, lookahead};
  return p;
}

inline PolicyHandle make_constant_policy(const ActionLimits& limits, Action a) {
  PolicyHandle p;
  p.learner_kind = learner_kind::kConstant;
  p.limits = limits;
  p.parameters = {a.v_cmd, a.w_cmd};
  return p;
}

namespace detail {

inline Action goto_pose_action(std::span<const double> params, const ActionLimits& lim, const Observation& o) {
  if (params.size() != 2) throw PolicyFormatError("goto_pose expects 2 parameters");
  const double gain = params[0];
  const double lookahead = params[1];
  // Robot position and heading in the goal frame.
  const double px = -o.goal_dx;
  const double py = -o.goal_dy;
  const double aim_x = std::min(px + lookahead, 0.0);
  const double desired = std::atan2(-py, aim_x - px);
  const double err = wrap_angle(desired - o.relative_heading);
  const Action raw{lim.v_max * std::max(0.0, std::cos(err)), gain * err};
  return lim.clamp(raw);
}

}  // namespace detail

/// Deterministic evaluation-time action; always within `policy.limits`.
inline Action act(const PolicyHandle& policy, const Observation& obs) {
  const auto& k = policy.learner_kind;
  if (k == learner_kind::kTileQ) {
    const TileLayout layout = TileLayout::read(policy.parameters);
    const auto weights = std::span<const double>(policy.parameters).subspan(TileLayout::kHeaderSize);
    std::vector<double> q(static_cast<std::size_t>(layout.actions()));
    tile_q_values(layout, weights, obs, q);
    return policy.limits.clamp(layout.action(argmax(q), policy.limits));
  }
  if (k == learner_kind::kGotoPose) return detail::goto_pose_action(policy.parameters, policy.limits, obs);
  if (k == learner_kind::kConstant) {
    if (policy.parameters.size() != 2) throw PolicyFormatError("constant expects 2 parameters");
    return policy.limits.clamp({policy.parameters[0], policy.parameters[1]});
  }
  throw PolicyFormatError("unknown learner kind '" + k + "'");
}

/// Episode-scoped wrapper applying the per-episode fault draw.
class PolicyAgent {
 public:
  PolicyAgent(const PolicyHandle& policy, std::uint64_t episode_seed) : policy_(policy) {
    if (policy.fault_rate > 0.0) {
      Rng r(derive_seed(episode_seed, "fault"));
      stalled_ = uniform01(r) < policy.fault_rate;
    }
    if (policy.learner_kind == learner_kind::kTileQ) {
      layout_ = TileLayout::read(policy.parameters);
      q_.resize(static_cast<std::size_t>(layout_.actions()));
    }
  }

  Action decide(const Observation& obs) {
    if (stalled_) return policy_.limits.clamp({0.0, 0.0});
    if (policy_.learner_kind == learner_kind::kTileQ) {
      tile_q_values(layout_, std::span<const double>(policy_.parameters).subspan(TileLayout::kHeaderSize), obs, q_);
      return policy_.limits.clamp(layout_.action(argmax(q_), policy_.limits));
    }
    return act(policy_, obs);
  }

  [[nodiscard]] bool stalled() const { return stalled_; }

 private:
  const PolicyHandle& policy_;
  bool stalled_ = false;
  TileLayout layout_;
  std::vector<double> q_;
};

/// One episode of `policy` on `subtask` in fidelity `cfg`.
inline RolloutRecord run_episode(const PolicyHandle& policy, const Subtask& subtask, const RobotState& start,
                                 const EnvironmentMap& env, const FidelityConfig& cfg, std::uint64_t seed,
                                 const EpisodeOptions& opts = {}) {
  PolicyAgent agent(policy, seed);
  return simulate_episode(agent, subtask, start, env, cfg, seed, opts);
}

// ---------------------------------------------------------------------------
// Binary persistence.
//
// Layout (little endian):
//   8 bytes  magic "MFCRLPOL"
//   u32      format version
//   u32      kind length, then kind bytes
//   f64 x 4  action limits (v_min, v_max, w_min, w_max)
//   f64      fault rate
//   u64      parameter count, then f64 parameters
//   u64      FNV-1a checksum of every preceding byte

inline constexpr std::array<char, 8> kPolicyMagic{'M', 'F', 'C', 'R', 'L', 'P', 'O', 'L'};
inline constexpr std::uint32_t kPolicyFormatVersion = 1;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint64_t u64() { return uint_n(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint_n(4)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t position() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw PolicyFormatError("policy file is truncated");
  }
  std::uint64_t uint_n(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_policy(const PolicyHandle& p) {
  std::string out(kPolicyMagic.begin(), kPolicyMagic.end());
  detail::put_u32(out, kPolicyFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(p.learner_kind.size()));
  out += p.learner_kind;
  for (double v : {p.limits.v_min, p.limits.v_max, p.limits.w_min, p.limits.w_max, p.fault_rate}) {
    detail::put_f64(out, v);
  }
  detail::put_u64(out, p.parameters.size());
  for (double v : p.parameters) detail::put_f64(out, v);
  detail::put_u64(out, fnv1a(out));
  return out;
}

inline PolicyHandle deserialize_policy(std::string_view bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(kPolicyMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kPolicyMagic.begin())) {
    throw PolicyFormatError("bad magic header");
  }
  if (const auto v = r.u32(); v != kPolicyFormatVersion) {
    throw PolicyFormatError("unsupported format version " + std::to_string(v));
  }
  PolicyHandle p;
  p.learner_kind = std::string(r.take(r.u32()));
  p.limits.v_min = r.f64();
  p.limits.v_max = r.f64();
  p.limits.w_min = r.f64();
  p.limits.w_max = r.f64();
  p.fault_rate = r.f64();
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 8) throw PolicyFormatError("parameter count exceeds file size");
  p.parameters.resize(n);
  for (auto& v : p.parameters) v = r.f64();
  const std::size_t body = r.position();
  const std::uint64_t stored = r.u64();
  if (stored != fnv1a(bytes.substr(0, body))) throw PolicyFormatError("checksum mismatch");
  if (r.remaining() != 0) throw PolicyFormatError("trailing bytes after checksum");
  return p;
}

inline void save_policy(const PolicyHandle& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_policy(p);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

inline PolicyHandle load_policy(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_policy(bytes);
}

}  // namespace mfcrl

#endif  // MFCRL_POLICY_HPP_
