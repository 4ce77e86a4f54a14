#include "capit/pairing.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "capit/error.hpp"
#include "capit/text.hpp"

namespace capit {

void PoseLog::validate() const {
  if (frames.empty()) throw InvalidInput("pose log '" + traversal_id + "' is empty");
  std::unordered_set<std::string> seen;
  for (const auto& f : frames) {
    if (!seen.insert(f.frame_id).second) {
      throw InvalidInput("duplicate frame id '" + f.frame_id + "' in traversal " + traversal_id);
    }
    if (!f.position.allFinite()) throw InvalidInput("non-finite position for frame " + f.frame_id);
  }
}

int PoseLog::find(const std::string& frame_id) const {
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (frames[k].frame_id == frame_id) return static_cast<int>(k);
  }
  return -1;
}

CoarsePairManifest pair_traversals(const PoseLog& source, const PoseLog& target,
                                   double max_distance) {
  source.validate();
  target.validate();
  if (!(max_distance > 0.0)) throw InvalidInput("max_distance must be positive");

  CoarsePairManifest m;
  m.source_traversal = source.traversal_id;
  m.target_traversal = target.traversal_id;
  m.max_distance = max_distance;
  for (const auto& s : source.frames) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < target.frames.size(); ++k) {
      const double d = (target.frames[k].position - s.position).norm();
      if (d < best) {  // strict: earliest index keeps ties
        best = d;
        best_k = k;
      }
    }
    if (best <= max_distance) m.pairs.push_back({s.frame_id, target.frames[best_k].frame_id, best});
  }
  return m;
}

std::pair<CoarsePairManifest, CoarsePairManifest> split_by_location(
    const CoarsePairManifest& manifest, const PoseLog& source, double boundary) {
  if (!(boundary > 0.0 && boundary < 1.0)) throw InvalidInput("boundary must lie in (0, 1)");
  source.validate();

  std::vector<double> arc(source.frames.size(), 0.0);
  for (std::size_t k = 1; k < source.frames.size(); ++k) {
    arc[k] = arc[k - 1] + (source.frames[k].position - source.frames[k - 1].position).norm();
  }
  const double total = arc.back();
  if (!(total > 0.0)) throw InvalidInput("degenerate route: zero total arc length");

  CoarsePairManifest first = manifest, second = manifest;
  first.pairs.clear();
  second.pairs.clear();
  for (const auto& p : manifest.pairs) {
    const int k = source.find(p.source_frame);
    if (k < 0) throw InvalidInput("pair references unknown source frame " + p.source_frame);
    (arc[k] / total < boundary ? first : second).pairs.push_back(p);
  }
  return {std::move(first), std::move(second)};
}

std::vector<PoseLog> read_pose_logs(std::istream& in) {
  std::vector<PoseLog> logs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = split(t, ',');
    if (fields.size() != 5) {
      throw InvalidInput("pose log line " + std::to_string(lineno) + ": expected 5 fields");
    }
    PoseFrame f;
    f.frame_id = fields[1];
    f.position = {parse_double(fields[2]), parse_double(fields[3])};
    f.timestamp = parse_double(fields[4]);
    if (logs.empty() || logs.back().traversal_id != fields[0]) {
      logs.push_back({fields[0], {}});
    }
    logs.back().frames.push_back(std::move(f));
  }
  return logs;
}

PoseLog read_pose_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose log " + path);
  auto logs = read_pose_logs(in);
  if (logs.size() != 1) throw InvalidInput(path + ": expected exactly one traversal");
  logs.front().validate();
  return std::move(logs.front());
}

void write_pose_log(std::ostream& out, const PoseLog& log) {
  out << std::setprecision(17);
  for (const auto& f : log.frames) {
    out << log.traversal_id << ',' << f.frame_id << ',' << f.position.x() << ','
        << f.position.y() << ',' << f.timestamp << '\n';
  }
}

void write_pose_log_file(const std::string& path, const PoseLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose log " + path);
  write_pose_log(out, log);
}

void write_manifest(std::ostream& out, const CoarsePairManifest& m) {
  out << std::setprecision(17);
  out << "# capit-pairs v1\n";
  out << "# source_traversal: " << m.source_traversal << '\n';
  out << "# target_traversal: " << m.target_traversal << '\n';
  out << "# max_distance: " << m.max_distance << '\n';
  out << "# count: " << m.pairs.size() << '\n';
  for (const auto& p : m.pairs) {
    out << p.source_frame << ',' << p.target_frame << ',' << p.gps_distance << '\n';
  }
}

CoarsePairManifest read_manifest(std::istream& in) {
  CoarsePairManifest m;
  std::string line;
  long long expected = -1;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto colon = t.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(t.substr(1, colon - 1));
      const std::string value = trim(t.substr(colon + 1));
      if (key == "source_traversal") m.source_traversal = value;
      else if (key == "target_traversal") m.target_traversal = value;
      else if (key == "max_distance") m.max_distance = parse_double(value);
      else if (key == "count") expected = std::stoll(value);
      continue;
    }
    const auto fields = split(t, ',');
    if (fields.size() != 3) throw InvalidInput("manifest row needs 3 fields: " + t);
    m.pairs.push_back({fields[0], fields[1], parse_double(fields[2])});
  }
  if (expected >= 0 && expected != static_cast<long long>(m.pairs.size())) {
    throw IntegrityError("manifest row count does not match header");
  }
  return m;
}

void write_manifest_file(const std::string& path, const CoarsePairManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  write_manifest(out, m);
}

CoarsePairManifest read_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  return read_manifest(in);
}

}  // namespace capit
