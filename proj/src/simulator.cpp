#include "paza/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace paza {
namespace {

using nlohmann::json;

// splitmix64 finalizer.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: draw n of stream s is a pure function of
// (seed, s, n), so shoppers can be generated in any order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed) ^ mix(stream * 0x632be59bd9b4e019ULL)) {}

  double uniform() { return static_cast<double>(mix(key_ ^ mix(counter_++)) >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double sigma) {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  double exponential(double mean) { return -std::log(1.0 - uniform()) * mean; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t stream_id(std::uint64_t camera, std::uint64_t shopper, std::uint64_t purpose) {
  return mix(mix(camera + 1) ^ (shopper * 0x100000001b3ULL) ^ (purpose << 56));
}

constexpr std::array<std::uint16_t, 8> kShelfClasses = {39, 41, 46, 47, 49, 73, 76, 44};
constexpr int kSlots = 8;
constexpr double kSlotSpacing = 140.0;
constexpr double kShelfY = 200.0;
constexpr double kObjectW = 36.0;
constexpr double kObjectH = 56.0;
constexpr double kBaseW = 120.0;
constexpr double kBaseH = 300.0;
constexpr double kStandOffset = 60.0;
constexpr double kJitterPx = 1.0;

double slot_x(int slot) { return kSlotSpacing * (slot + 1); }

struct Waypoint {
  std::uint64_t t_ms;
  double cx;
  double cy;
};

struct Shopper {
  int camera = 0;
  std::uint64_t track_id = 0;
  std::uint64_t index = 0;
  ShopperBehavior behavior = ShopperBehavior::kPassThrough;
  double w = kBaseW;
  double h = kBaseH;
  std::vector<Waypoint> path;
  int slot = -1;
  std::optional<std::uint64_t> pickup_ms;
  std::optional<std::uint64_t> restore_ms;
  std::optional<std::uint64_t> conceal_start_ms;
  std::optional<std::uint64_t> conceal_end_ms;
  std::optional<std::uint64_t> conceal_time_ms;

  std::uint64_t enter_ms() const { return path.front().t_ms; }
  std::uint64_t exit_ms() const { return path.back().t_ms; }

  Point center_at(std::uint64_t t) const {
    if (t <= path.front().t_ms) return {path.front().cx, path.front().cy};
    for (std::size_t i = 1; i < path.size(); ++i) {
      if (t <= path[i].t_ms) {
        const Waypoint& a = path[i - 1];
        const Waypoint& b = path[i];
        const double span = static_cast<double>(b.t_ms - a.t_ms);
        const double f = span > 0 ? static_cast<double>(t - a.t_ms) / span : 1.0;
        return {a.cx + f * (b.cx - a.cx), a.cy + f * (b.cy - a.cy)};
      }
    }
    return {path.back().cx, path.back().cy};
  }

  // 0 = hands resting, 1 = hands at torso.
  double hands_in(std::uint64_t t) const {
    if (!conceal_start_ms) return 0.0;
    constexpr double kRampMs = 300.0;
    const auto s = static_cast<double>(*conceal_start_ms);
    const auto e = static_cast<double>(*conceal_end_ms);
    const auto x = static_cast<double>(t);
    if (x < s || x > e + kRampMs) return 0.0;
    if (x < s + kRampMs) return (x - s) / kRampMs;
    if (x <= e) return 1.0;
    return 1.0 - (x - e) / kRampMs;
  }
};

struct SlotReservation {
  std::uint64_t from;
  std::uint64_t to;
};

std::uint64_t ms_for(double px, double speed) { return static_cast<std::uint64_t>(std::llround(px / speed * 1000.0)); }

Keypoints blend(const Keypoints& a, const Keypoints& b, double f) {
  Keypoints out = a;
  for (std::size_t i = 0; i < kNumKeypoints; ++i) {
    out[i].x = a[i].x + f * (b[i].x - a[i].x);
    out[i].y = a[i].y + f * (b[i].y - a[i].y);
  }
  return out;
}

class Generator {
 public:
  explicit Generator(const ScenarioConfig& cfg) : cfg_(cfg), reservations_(static_cast<std::size_t>(cfg.cameras)) {
    for (auto& cam : reservations_) cam.resize(kSlots);
    next_track_.assign(static_cast<std::size_t>(cfg.cameras), 1);
  }

  Trace run() {
    std::vector<ShopperPlan> plans = cfg_.shoppers;
    if (plans.empty()) plans = poisson_plans();
    std::stable_sort(plans.begin(), plans.end(), [](const ShopperPlan& a, const ShopperPlan& b) {
      return std::tie(a.camera, a.enter_ms) < std::tie(b.camera, b.enter_ms);
    });
    std::vector<std::uint64_t> per_camera_index(static_cast<std::size_t>(cfg_.cameras), 0);
    for (const ShopperPlan& p : plans) {
      if (p.camera < 0 || p.camera >= cfg_.cameras) throw std::invalid_argument("shopper camera out of range");
      shoppers_.push_back(build(p, per_camera_index[static_cast<std::size_t>(p.camera)]++));
    }
    return emit();
  }

 private:
  std::string camera_name(int c) const { return "cam" + std::to_string(c); }

  std::vector<ShopperPlan> poisson_plans() const {
    std::vector<ShopperPlan> plans;
    const double mean_gap_ms = cfg_.arrival_rate_per_min > 0 ? 60'000.0 / cfg_.arrival_rate_per_min : 0.0;
    const double end_ms = cfg_.duration_s * 1000.0;
    for (int c = 0; c < cfg_.cameras; ++c) {
      if (mean_gap_ms <= 0) break;
      CounterRng arrivals(cfg_.seed, stream_id(static_cast<std::uint64_t>(c), 0, 1));
      double t = arrivals.exponential(mean_gap_ms);
      std::uint64_t n = 0;
      while (t < end_ms) {
        CounterRng pick(cfg_.seed, stream_id(static_cast<std::uint64_t>(c), n++, 2));
        ShopperPlan p;
        p.camera = c;
        p.enter_ms = static_cast<std::uint64_t>(t);
        p.behavior = ShopperBehavior::kPassThrough;
        if (pick.uniform() < cfg_.browse_fraction) {
          p.behavior = ShopperBehavior::kBrowse;
          if (pick.uniform() < cfg_.pickup_fraction) {
            p.behavior = ShopperBehavior::kPickupNoConceal;
            if (pick.uniform() < cfg_.conceal_fraction) p.behavior = ShopperBehavior::kConceal;
          }
        }
        plans.push_back(p);
        t += arrivals.exponential(mean_gap_ms);
      }
    }
    return plans;
  }

  bool slot_free(int camera, int slot, SlotReservation r) const {
    for (const SlotReservation& o : reservations_[static_cast<std::size_t>(camera)][static_cast<std::size_t>(slot)]) {
      if (r.from <= o.to && o.from <= r.to) return false;
    }
    return true;
  }

  Shopper build(const ShopperPlan& plan, std::uint64_t index) {
    CounterRng rng(cfg_.seed, stream_id(static_cast<std::uint64_t>(plan.camera), index, 3));
    Shopper s;
    s.camera = plan.camera;
    s.index = index;
    s.track_id = next_track_[static_cast<std::size_t>(plan.camera)]++;
    s.behavior = plan.behavior;
    const double scale = rng.uniform(0.9, 1.1);
    s.w = kBaseW * scale;
    s.h = kBaseH * scale;

    const double W = cfg_.frame_width;
    const double H = cfg_.frame_height;
    const double speed = rng.uniform(170.0, 230.0);
    const bool from_left = rng.uniform() < 0.5;
    const double x_left = s.w / 2.0 + 1.0;
    const double x_right = W - s.w / 2.0 - 1.0;
    const double lane_y = H - s.h / 2.0 - 8.0;
    const double x_start = from_left ? x_left : x_right;
    const double x_end = from_left ? x_right : x_left;

    std::uint64_t t = plan.enter_ms;
    s.path.push_back({t, x_start, lane_y});

    if (s.behavior != ShopperBehavior::kPassThrough) {
      const double stand_y = kShelfY + kStandOffset * scale;
      const auto browse_ms = static_cast<std::uint64_t>(rng.uniform(5'000.0, 8'000.0));
      int slot = plan.slot.value_or(static_cast<int>(rng.uniform() * kSlots) % kSlots);

      // Reserve the slot for the whole shelf visit (and until restock after a
      // concealment) so concurrent shoppers never share one object.
      auto timeline = [&](int candidate) {
        const double sx = slot_x(candidate);
        const std::uint64_t t1 = t + ms_for(std::abs(sx - x_start), speed);
        const std::uint64_t t2 = t1 + ms_for(lane_y - stand_y, speed);
        const std::uint64_t t3 = t2 + browse_ms;
        const std::uint64_t t4 = t3 + ms_for(lane_y - stand_y, speed);
        const std::uint64_t t5 = t4 + ms_for(std::abs(x_end - sx), speed);
        return std::array<std::uint64_t, 5>{t1, t2, t3, t4, t5};
      };
      auto reservation = [&](const std::array<std::uint64_t, 5>& tl) {
        return SlotReservation{tl[0] > 500 ? tl[0] - 500 : 0, tl[4] + 1'500};
      };
      bool placed = false;
      for (int k = 0; k < kSlots && !placed; ++k) {
        const int cand = (slot + k) % kSlots;
        const auto tl = timeline(cand);
        if (!slot_free(s.camera, cand, reservation(tl))) continue;
        reservations_[static_cast<std::size_t>(s.camera)][static_cast<std::size_t>(cand)].push_back(reservation(tl));
        slot = cand;
        placed = true;
        const double sx = slot_x(slot);
        s.slot = slot;
        s.path.push_back({tl[0], sx, lane_y});
        s.path.push_back({tl[1], sx, stand_y});
        s.path.push_back({tl[2], sx, stand_y});
        s.path.push_back({tl[3], sx, lane_y});
        s.path.push_back({tl[4], x_end, lane_y});
        if (s.behavior == ShopperBehavior::kPickupNoConceal || s.behavior == ShopperBehavior::kConceal) {
          s.pickup_ms = tl[1] + 2'000;
          s.restore_ms = s.behavior == ShopperBehavior::kConceal ? tl[4] + 1'000 : tl[1] + 4'000;
        }
        if (s.behavior == ShopperBehavior::kConceal) {
          s.conceal_start_ms = *s.pickup_ms + 1'000;
          s.conceal_end_ms = *s.conceal_start_ms + 1'800;
          s.conceal_time_ms = *s.conceal_start_ms + 300;
        }
      }
      if (!placed) s.behavior = ShopperBehavior::kPassThrough;
    }
    if (s.behavior == ShopperBehavior::kPassThrough) {
      s.path.resize(1);
      s.path.push_back({t + ms_for(std::abs(x_end - x_start), speed), x_end, lane_y});
    }
    return s;
  }

  // Labels only what the trace shows: a shopper cut off by the end of the
  // trace is downgraded to the last stage completed.
  static ShopperBehavior observed_behavior(const Shopper& s, std::uint64_t end_ms) {
    ShopperBehavior b = s.behavior;
    if (b == ShopperBehavior::kConceal && *s.conceal_end_ms > end_ms) b = ShopperBehavior::kPickupNoConceal;
    if (b == ShopperBehavior::kPickupNoConceal && *s.pickup_ms > end_ms) b = ShopperBehavior::kBrowse;
    // path[2] is the arrival at the shelf.
    if (b == ShopperBehavior::kBrowse && (s.path.size() < 3 || s.path[2].t_ms > end_ms)) b = ShopperBehavior::kPassThrough;
    return b;
  }

  bool object_present(int camera, int slot, std::uint64_t t) const {
    for (const Shopper& s : shoppers_) {
      if (s.camera != camera || s.slot != slot || !s.pickup_ms) continue;
      if (t >= *s.pickup_ms && t < *s.restore_ms) return false;
    }
    return true;
  }

  Trace emit() {
    Trace trace;
    const auto frames = static_cast<std::uint64_t>(std::llround(cfg_.duration_s * cfg_.fps));
    const std::uint64_t end_ms = frames == 0 ? 0 : (frames - 1) * 1000 / static_cast<std::uint64_t>(cfg_.fps);
    trace.events.reserve(static_cast<std::size_t>(frames * static_cast<std::uint64_t>(cfg_.cameras)));

    std::vector<CounterRng> jitter;
    jitter.reserve(shoppers_.size());
    for (const Shopper& s : shoppers_) {
      jitter.emplace_back(cfg_.seed, stream_id(static_cast<std::uint64_t>(s.camera), s.index, 4));
    }

    const double W = cfg_.frame_width;
    const double H = cfg_.frame_height;
    for (std::uint64_t i = 0; i < frames; ++i) {
      const std::uint64_t t = i * 1000 / static_cast<std::uint64_t>(cfg_.fps);
      for (int c = 0; c < cfg_.cameras; ++c) {
        FrameEvent ev;
        ev.camera_id = camera_name(c);
        ev.frame_index = i;
        ev.timestamp_ms = t;
        for (int slot = 0; slot < kSlots; ++slot) {
          if (!object_present(c, slot, t)) continue;
          const double x = slot_x(slot);
          ev.detections.push_back(Detection{kShelfClasses[static_cast<std::size_t>(slot)], 0.9,
                                            BBox{x - kObjectW / 2, kShelfY - kObjectH / 2, x + kObjectW / 2,
                                                 kShelfY + kObjectH / 2}});
        }
        for (std::size_t k = 0; k < shoppers_.size(); ++k) {
          const Shopper& s = shoppers_[k];
          if (s.camera != c || t < s.enter_ms() || t > s.exit_ms()) continue;
          CounterRng& rng = jitter[k];
          const Point ctr = s.center_at(t);
          const double cx = ctr.x + rng.normal(kJitterPx);
          const double cy = ctr.y + rng.normal(kJitterPx);
          BBox box{std::clamp(cx - s.w / 2, 0.0, W - 2.0), std::clamp(cy - s.h / 2, 0.0, H - 2.0), 0.0, 0.0};
          box.x2 = std::clamp(cx + s.w / 2, box.x1 + 1.0, W);
          box.y2 = std::clamp(cy + s.h / 2, box.y1 + 1.0, H);

          TrackedPerson person{s.track_id, box, std::nullopt};
          if (cfg_.emit_keypoints) {
            Keypoints kp = blend(body_keypoints(box, false), body_keypoints(box, true), s.hands_in(t));
            for (Keypoint& p : kp) {
              p.x += rng.normal(kJitterPx);
              p.y += rng.normal(kJitterPx);
            }
            person.keypoints = kp;
          }
          ev.detections.push_back(Detection{kPersonClass, 0.9, box});
          ev.tracks.push_back(std::move(person));
        }
        trace.events.push_back(std::move(ev));
      }
    }

    for (const Shopper& s : shoppers_) {
      if (s.enter_ms() > end_ms) continue;
      ShopperTruth truth;
      truth.key = TrackKey{camera_name(s.camera), s.track_id};
      truth.behavior = observed_behavior(s, end_ms);
      if (truth.behavior == ShopperBehavior::kConceal) truth.conceal_time_ms = s.conceal_time_ms;
      truth.enter_ms = s.enter_ms();
      truth.exit_ms = std::min(s.exit_ms(), end_ms);
      trace.truth.shoppers.push_back(truth);
    }
    return trace;
  }

  const ScenarioConfig& cfg_;
  std::vector<std::vector<std::vector<SlotReservation>>> reservations_;
  std::vector<std::uint64_t> next_track_;
  std::vector<Shopper> shoppers_;
};

}  // namespace

std::string to_string(ShopperBehavior b) {
  switch (b) {
    case ShopperBehavior::kPassThrough:
      return "pass_through";
    case ShopperBehavior::kBrowse:
      return "browse";
    case ShopperBehavior::kPickupNoConceal:
      return "pickup_no_conceal";
    case ShopperBehavior::kConceal:
      return "conceal";
  }
  return "pass_through";
}

std::optional<ShopperBehavior> behavior_from_string(std::string_view s) {
  if (s == "pass_through") return ShopperBehavior::kPassThrough;
  if (s == "browse") return ShopperBehavior::kBrowse;
  if (s == "pickup_no_conceal") return ShopperBehavior::kPickupNoConceal;
  if (s == "conceal") return ShopperBehavior::kConceal;
  return std::nullopt;
}

void ScenarioConfig::validate() const {
  for (double p : {browse_fraction, pickup_fraction, conceal_fraction}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("scenario probabilities must lie in [0,1]");
  }
  if (fps < 1) throw std::invalid_argument("fps must be >= 1");
  if (cameras < 1) throw std::invalid_argument("cameras must be >= 1");
  if (!(duration_s >= 0.0)) throw std::invalid_argument("duration must be >= 0");
  if (!(arrival_rate_per_min >= 0.0)) throw std::invalid_argument("arrival rate must be >= 0");
  if (frame_width < 2 * static_cast<int>(kSlotSpacing * kSlots / 2) || frame_height < 600) {
    throw std::invalid_argument("frame must be at least 1120x600 for the shelf layout");
  }
}

const ShopperTruth* GroundTruth::find(const TrackKey& key) const {
  for (const auto& s : shoppers) {
    if (s.key == key) return &s;
  }
  return nullptr;
}

std::size_t GroundTruth::count(ShopperBehavior b) const {
  return static_cast<std::size_t>(
      std::count_if(shoppers.begin(), shoppers.end(), [b](const ShopperTruth& s) { return s.behavior == b; }));
}

Keypoints body_keypoints(const BBox& box, bool hands_to_torso) {
  const double cx = box.center().x;
  const double w = box.width();
  const double h = box.height();
  const double y = box.y1;
  auto kp = [](double x, double yy) { return Keypoint{x, yy, 0.9}; };
  Keypoints k{};
  k[0] = kp(cx, y + 0.07 * h);               // nose
  k[1] = kp(cx - 0.06 * w, y + 0.05 * h);    // eyes
  k[2] = kp(cx + 0.06 * w, y + 0.05 * h);
  k[3] = kp(cx - 0.12 * w, y + 0.06 * h);    // ears
  k[4] = kp(cx + 0.12 * w, y + 0.06 * h);
  k[5] = kp(cx - 0.30 * w, y + 0.22 * h);    // shoulders
  k[6] = kp(cx + 0.30 * w, y + 0.22 * h);
  k[7] = kp(cx - 0.38 * w, y + 0.38 * h);    // elbows
  k[8] = kp(cx + 0.38 * w, y + 0.38 * h);
  if (hands_to_torso) {
    k[9] = kp(cx - 0.05 * w, y + 0.42 * h);  // wrists
    k[10] = kp(cx + 0.05 * w, y + 0.42 * h);
  } else {
    k[9] = kp(cx - 0.30 * w, y + 0.72 * h);
    k[10] = kp(cx + 0.30 * w, y + 0.72 * h);
  }
  k[11] = kp(cx - 0.18 * w, y + 0.55 * h);   // hips
  k[12] = kp(cx + 0.18 * w, y + 0.55 * h);
  k[13] = kp(cx - 0.15 * w, y + 0.75 * h);   // knees
  k[14] = kp(cx + 0.15 * w, y + 0.75 * h);
  k[15] = kp(cx - 0.15 * w, y + 0.95 * h);   // ankles
  k[16] = kp(cx + 0.15 * w, y + 0.95 * h);
  return k;
}

Trace generate_trace(const ScenarioConfig& cfg) {
  cfg.validate();
  return Generator(cfg).run();
}

json to_json(const ShopperTruth& t) {
  json j = {{"camera_id", t.key.camera_id},
            {"track_id", t.key.track_id},
            {"behavior", to_string(t.behavior)},
            {"enter_ms", t.enter_ms},
            {"exit_ms", t.exit_ms}};
  j["conceal_time_ms"] = t.conceal_time_ms ? json(*t.conceal_time_ms) : json(nullptr);
  return j;
}

std::string truth_path_for(const std::filesystem::path& trace_path) { return trace_path.string() + ".truth.jsonl"; }

void write_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const FrameEvent& ev : trace.events) out << serialize_frame_event(ev) << '\n';
  std::ofstream truth(truth_path_for(path), std::ios::binary | std::ios::trunc);
  if (!truth) throw std::runtime_error("cannot write " + truth_path_for(path));
  for (const ShopperTruth& s : trace.truth.shoppers) truth << to_json(s).dump() << '\n';
}

GroundTruth read_truth(const std::filesystem::path& truth_path) {
  std::ifstream in(truth_path);
  if (!in) throw std::runtime_error("cannot read " + truth_path.string());
  GroundTruth gt;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    ShopperTruth t;
    t.key = TrackKey{j.at("camera_id").get<std::string>(), j.at("track_id").get<std::uint64_t>()};
    const auto b = behavior_from_string(j.at("behavior").get<std::string>());
    if (!b) throw std::runtime_error("unknown behavior in " + truth_path.string());
    t.behavior = *b;
    if (j.contains("conceal_time_ms") && !j["conceal_time_ms"].is_null())
      t.conceal_time_ms = j["conceal_time_ms"].get<std::uint64_t>();
    t.enter_ms = j.value("enter_ms", std::uint64_t{0});
    t.exit_ms = j.value("exit_ms", std::uint64_t{0});
    gt.shoppers.push_back(t);
  }
  return gt;
}

TriggerEval trigger_eval(const std::vector<FireRecord>& fires, const GroundTruth& truth) {
  TriggerEval e;
  std::map<TrackKey, bool> concealer_fired;
  for (const ShopperTruth& s : truth.shoppers) {
    if (s.behavior == ShopperBehavior::kConceal) concealer_fired[s.key] = false;
  }
  e.concealers = concealer_fired.size();
  e.fires = fires.size();
  for (const FireRecord& f : fires) {
    auto it = concealer_fired.find(f.key);
    if (it == concealer_fired.end()) continue;
    ++e.fires_on_concealers;
    it->second = true;
  }
  for (const auto& [key, fired] : concealer_fired) e.concealers_fired += fired;
  if (e.concealers > 0) e.trigger_recall = static_cast<double>(e.concealers_fired) / static_cast<double>(e.concealers);
  if (e.fires > 0) e.trigger_precision = static_cast<double>(e.fires_on_concealers) / static_cast<double>(e.fires);
  return e;
}

json to_json(const TriggerEval& e) {
  return {{"concealers", e.concealers},
          {"concealers_fired", e.concealers_fired},
          {"fires", e.fires},
          {"fires_on_concealers", e.fires_on_concealers},
          {"trigger_recall", ratio_json(e.trigger_recall)},
          {"trigger_precision", ratio_json(e.trigger_precision)}};
}

}  // namespace paza
