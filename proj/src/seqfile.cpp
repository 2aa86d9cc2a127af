#include "egocast/seqfile.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace egocast {

namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

ordered_json header_json(const PoseSequence& seq) {
  ordered_json h;
  h["format"] = "egocast-seq";
  h["version"] = 1;
  ordered_json skel;
  skel["joints"] = seq.skeleton.joints;
  skel["root_rule"] = seq.skeleton.root_rule.joints;
  h["skeleton"] = std::move(skel);
  h["fps"] = seq.fps;
  h["activity"] = seq.activity;
  return h;
}

ordered_json frame_json(const PoseFrame& f) {
  ordered_json j;
  j["i"] = f.index;
  j["t"] = f.timestamp_s;
  j["p"] = {f.headset.position.x, f.headset.position.y, f.headset.position.z};
  j["y"] = {f.headset.rotation.w, f.headset.rotation.x, f.headset.rotation.y,
            f.headset.rotation.z};
  if (f.body) {
    ordered_json q = ordered_json::array();
    for (const Vec3& joint : f.body->joints) q.push_back({joint.x, joint.y, joint.z});
    j["q"] = std::move(q);
  } else {
    j["q"] = nullptr;
  }
  if (f.visual) j["v"] = *f.visual;
  return j;
}

double want_number(const json& j, const char* key, long line) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(std::string("frame is missing numeric field \"") + key + "\"", line);
  return j[key].get<double>();
}

Vec3 want_vec3(const json& arr, const char* key, long line) {
  if (!arr.is_array() || arr.size() != 3)
    throw ParseError(std::string("\"") + key + "\" must be an array of 3 numbers", line);
  for (const auto& v : arr)
    if (!v.is_number()) throw ParseError(std::string("\"") + key + "\" holds a non-number", line);
  return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

}  // namespace

std::string sequences_to_jsonl(std::span<const PoseSequence> sequences) {
  std::ostringstream out;
  for (const PoseSequence& seq : sequences) {
    out << header_json(seq).dump() << '\n';
    for (const PoseFrame& f : seq.frames) out << frame_json(f).dump() << '\n';
  }
  return out.str();
}

void write_sequences(const std::string& path, std::span<const PoseSequence> sequences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << sequences_to_jsonl(sequences);
  if (!out) throw DataError("failed while writing '" + path + "'");
}

std::vector<PoseSequence> parse_sequences(const std::string& text) {
  std::vector<PoseSequence> sequences;
  PoseSequence* current = nullptr;
  int expected_index = 0;

  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) throw ParseError("each line must be a JSON object", line_no);

    if (j.contains("format")) {
      if (j["format"] != "egocast-seq")
        throw ParseError("unknown format tag " + j["format"].dump(), line_no);
      if (!j.contains("version") || j["version"] != 1)
        throw ParseError("unsupported version " + (j.contains("version") ? j["version"].dump() : "<missing>"),
                         line_no);
      if (!j.contains("skeleton") || !j["skeleton"].is_object())
        throw ParseError("header is missing \"skeleton\"", line_no);

      PoseSequence seq;
      try {
        seq.skeleton.joints = j["skeleton"].at("joints").get<std::vector<std::string>>();
        seq.skeleton.root_rule.joints =
            j["skeleton"].at("root_rule").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ParseError(std::string("bad skeleton block: ") + e.what(), line_no);
      }
      try {
        seq.skeleton.validate();
      } catch (const Error& e) {
        throw ParseError(std::string("invalid skeleton: ") + e.what(), line_no);
      }
      seq.fps = j.contains("fps") && j["fps"].is_number() ? j["fps"].get<double>() : 30.0;
      if (j.contains("activity") && j["activity"].is_string())
        seq.activity = j["activity"].get<std::string>();
      sequences.push_back(std::move(seq));
      current = &sequences.back();
      expected_index = 0;
      continue;
    }

    if (!current) throw ParseError("frame line before any header", line_no);

    PoseFrame frame;
    const double raw_i = want_number(j, "i", line_no);
    frame.index = static_cast<int>(raw_i);
    if (frame.index != expected_index)
      throw FormatError("line " + std::to_string(line_no) + ": frame index " +
                        std::to_string(frame.index) + " breaks the contiguous order (expected " +
                        std::to_string(expected_index) + ")");
    ++expected_index;
    frame.timestamp_s = want_number(j, "t", line_no);

    if (!j.contains("p")) throw ParseError("frame is missing \"p\"", line_no);
    frame.headset.position = want_vec3(j["p"], "p", line_no);

    if (!j.contains("y") || !j["y"].is_array() || j["y"].size() != 4)
      throw ParseError("\"y\" must be an array of 4 numbers", line_no);
    for (const auto& v : j["y"])
      if (!v.is_number()) throw ParseError("\"y\" holds a non-number", line_no);
    Quat y{j["y"][0].get<double>(), j["y"][1].get<double>(), j["y"][2].get<double>(),
           j["y"][3].get<double>()};
    if (std::fabs(y.norm() - 1.0) > 1e-6)
      throw ParseError("frame " + std::to_string(frame.index) + " has a non-unit quaternion (|y| = " +
                           std::to_string(y.norm()) + ")",
                       line_no);
    // Keep exact bytes for already-canonical input; repair only when needed.
    if (std::fabs(y.norm() - 1.0) > 1e-12 || y.w < 0) y = normalize_quaternion(y);
    frame.headset.rotation = y;

    if (!j.contains("q")) throw ParseError("frame is missing \"q\"", line_no);
    if (!j["q"].is_null()) {
      if (!j["q"].is_array())
        throw ParseError("\"q\" must be null or an array of joints", line_no);
      if (static_cast<int>(j["q"].size()) != current->skeleton.joint_count())
        throw FormatError("line " + std::to_string(line_no) + ": frame has " +
                          std::to_string(j["q"].size()) + " joints but the header skeleton has " +
                          std::to_string(current->skeleton.joint_count()));
      BodyPose body;
      for (const auto& joint : j["q"]) body.joints.push_back(want_vec3(joint, "q", line_no));
      frame.body = std::move(body);
    }

    if (j.contains("v")) {
      if (!j["v"].is_array()) throw ParseError("\"v\" must be an array", line_no);
      std::vector<double> vis;
      for (const auto& v : j["v"]) {
        if (!v.is_number()) throw ParseError("\"v\" holds a non-number", line_no);
        vis.push_back(v.get<double>());
      }
      frame.visual = std::move(vis);
    }

    current->frames.push_back(std::move(frame));
  }

  for (const PoseSequence& seq : sequences) seq.validate();
  return sequences;
}

std::vector<PoseSequence> read_sequences(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_sequences(buffer.str());
}

}  // namespace egocast
