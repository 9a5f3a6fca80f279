#include "paza/event_model.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace paza {
namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& field, const std::string& what) {
  throw ParseError(ParseError::Kind::kSchema, "schema violation at '" + field + "': " + what);
}

[[noreturn]] void invariant_error(const std::string& what) {
  throw ParseError(ParseError::Kind::kInvariant, "invariant violation: " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path + key, "missing");
  return *it;
}

std::uint64_t as_u64(const json& v, const std::string& field) {
  if (!v.is_number_unsigned()) schema_error(field, "expected non-negative integer");
  return v.get<std::uint64_t>();
}

double as_finite(const json& v, const std::string& field) {
  if (!v.is_number()) schema_error(field, "expected number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) invariant_error(field + " is not finite");
  return d;
}

double as_unit(const json& v, const std::string& field) {
  const double d = as_finite(v, field);
  if (d < 0.0 || d > 1.0) invariant_error(field + " outside [0,1]");
  return d;
}

BBox parse_bbox(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 4) schema_error(field, "expected array of 4 numbers");
  BBox b{as_finite(v[0], field + "[0]"), as_finite(v[1], field + "[1]"),
         as_finite(v[2], field + "[2]"), as_finite(v[3], field + "[3]")};
  if (b.x1 < 0 || b.y1 < 0 || b.x2 < 0 || b.y2 < 0) invariant_error(field + " has negative coordinate");
  if (!(b.x2 > b.x1) || !(b.y2 > b.y1)) invariant_error(field + " has non-positive width or height");
  return b;
}

Keypoints parse_keypoints(const json& v, const std::string& field) {
  if (!v.is_array()) schema_error(field, "expected array");
  if (v.size() != kNumKeypoints) {
    invariant_error("keypoints length " + std::to_string(v.size()) + " != 17 at " + field);
  }
  Keypoints kps{};
  for (std::size_t i = 0; i < kNumKeypoints; ++i) {
    const std::string f = field + "[" + std::to_string(i) + "]";
    const json& k = v[i];
    if (!k.is_array() || k.size() != 3) schema_error(f, "expected [x, y, conf]");
    kps[i] = Keypoint{as_finite(k[0], f + "[0]"), as_finite(k[1], f + "[1]"), as_unit(k[2], f + "[2]")};
  }
  return kps;
}

json bbox_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

double BBox::diagonal() const { return std::hypot(width(), height()); }

StreamError::StreamError(Kind kind, std::size_t position, const std::string& camera_id)
    : std::runtime_error(std::string(kind == Kind::kRegressingFrameIndex ? "regressing frame_index"
                                                                          : "regressing timestamp") +
                         " at position " + std::to_string(position) + " (camera " + camera_id + ")"),
      kind_(kind),
      position_(position) {}

FrameEvent parse_frame_event(std::string_view line) {
  json doc = json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ParseError(ParseError::Kind::kMalformedJson, "malformed JSON");
  if (!doc.is_object()) schema_error("$", "expected object");

  FrameEvent ev;
  const json& cam = require(doc, "camera_id", "");
  if (!cam.is_string()) schema_error("camera_id", "expected string");
  ev.camera_id = cam.get<std::string>();
  ev.frame_index = as_u64(require(doc, "frame_index", ""), "frame_index");
  ev.timestamp_ms = as_u64(require(doc, "timestamp_ms", ""), "timestamp_ms");

  if (auto it = doc.find("image_ref"); it != doc.end() && !it->is_null()) {
    if (!it->is_string()) schema_error("image_ref", "expected string");
    ev.image_ref = it->get<std::string>();
  }

  const json& dets = require(doc, "detections", "");
  if (!dets.is_array()) schema_error("detections", "expected array");
  ev.detections.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string p = "detections[" + std::to_string(i) + "].";
    const json& d = dets[i];
    if (!d.is_object()) schema_error(p, "expected object");
    Detection det;
    const std::uint64_t cls = as_u64(require(d, "class_id", p), p + "class_id");
    if (cls > std::numeric_limits<std::uint16_t>::max()) schema_error(p + "class_id", "exceeds u16");
    det.class_id = static_cast<std::uint16_t>(cls);
    det.confidence = as_unit(require(d, "confidence", p), p + "confidence");
    det.bbox = parse_bbox(require(d, "bbox", p), p + "bbox");
    ev.detections.push_back(det);
  }

  const json& tracks = require(doc, "tracks", "");
  if (!tracks.is_array()) schema_error("tracks", "expected array");
  std::set<std::uint64_t> seen;
  ev.tracks.reserve(tracks.size());
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const std::string p = "tracks[" + std::to_string(i) + "].";
    const json& t = tracks[i];
    if (!t.is_object()) schema_error(p, "expected object");
    TrackedPerson person;
    person.track_id = as_u64(require(t, "track_id", p), p + "track_id");
    if (person.track_id == 0) invariant_error(p + "track_id must be positive");
    if (!seen.insert(person.track_id).second) {
      invariant_error("duplicate track_id " + std::to_string(person.track_id));
    }
    person.bbox = parse_bbox(require(t, "bbox", p), p + "bbox");
    if (auto it = t.find("keypoints"); it != t.end() && !it->is_null()) {
      person.keypoints = parse_keypoints(*it, p + "keypoints");
    }
    ev.tracks.push_back(std::move(person));
  }
  return ev;
}

std::string serialize_frame_event(const FrameEvent& event) {
  json doc = json::object();
  doc["camera_id"] = event.camera_id;
  doc["frame_index"] = event.frame_index;
  doc["timestamp_ms"] = event.timestamp_ms;
  if (event.image_ref) doc["image_ref"] = *event.image_ref;
  json dets = json::array();
  for (const auto& d : event.detections) {
    dets.push_back({{"class_id", d.class_id}, {"confidence", d.confidence}, {"bbox", bbox_json(d.bbox)}});
  }
  doc["detections"] = std::move(dets);
  json tracks = json::array();
  for (const auto& t : event.tracks) {
    json jt = {{"track_id", t.track_id}, {"bbox", bbox_json(t.bbox)}};
    if (t.keypoints) {
      json kps = json::array();
      for (const auto& k : *t.keypoints) kps.push_back(json::array({k.x, k.y, k.conf}));
      jt["keypoints"] = std::move(kps);
    }
    tracks.push_back(std::move(jt));
  }
  doc["tracks"] = std::move(tracks);
  return doc.dump();
}

void validate_stream(const std::vector<FrameEvent>& events) {
  struct Last {
    std::uint64_t frame_index;
    std::uint64_t timestamp_ms;
  };
  std::map<std::string, Last, std::less<>> last;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const FrameEvent& ev = events[i];
    auto it = last.find(ev.camera_id);
    if (it != last.end()) {
      if (ev.frame_index <= it->second.frame_index) {
        throw StreamError(StreamError::Kind::kRegressingFrameIndex, i, ev.camera_id);
      }
      if (ev.timestamp_ms < it->second.timestamp_ms) {
        throw StreamError(StreamError::Kind::kRegressingTimestamp, i, ev.camera_id);
      }
    }
    last[ev.camera_id] = Last{ev.frame_index, ev.timestamp_ms};
  }
}

}  // namespace paza
