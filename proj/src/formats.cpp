#include "scanmap/formats.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "scanmap/errors.hpp"

namespace scanmap {

std::string fmt_g9(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

namespace {

// Splits a stream into data lines (comments and blanks removed) and parses a
// fixed number of doubles per line.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next_fields(std::span<double> fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const char* p = line.data();
      const char* end = p + line.size();
      std::size_t got = 0;
      while (true) {
        while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
        if (p >= end) break;
        if (got >= fields.size()) fail("too many fields");
        auto [next, ec] = std::from_chars(p, end, fields[got]);
        if (ec != std::errc{}) fail("malformed number");
        p = next;
        ++got;
      }
      if (got == 0) continue;  // blank or comment-only line
      if (got != fields.size()) fail("wrong field count");
      return true;
    }
    return false;
  }

 private:
  [[noreturn]] void fail(const char* what) const {
    throw IoError("line " + std::to_string(line_no_) + ": " + what);
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace

void write_scan_log(std::ostream& out, std::span<const ScanLogRecord> records) {
  out << "# scan log: timestamp bearing_rad range_m motor_yaw_rad motor_step_rad\n";
  for (const ScanLogRecord& r : records) {
    out << fmt_g9(r.timestamp) << ' ' << fmt_g9(r.bearing) << ' ' << fmt_g9(r.range) << ' '
        << fmt_g9(r.motor_yaw) << ' ' << fmt_g9(r.motor_step) << '\n';
  }
}

std::vector<ScanLogRecord> read_scan_log(std::istream& in) {
  std::vector<ScanLogRecord> records;
  LineReader reader(in);
  double f[5];
  while (reader.next_fields(f)) {
    records.push_back(ScanLogRecord{f[0], f[1], f[2], f[3], f[4]});
  }
  return records;
}

void write_estimate_stream(std::ostream& out, std::span<const GaussianScalarEstimate> stream) {
  out << "# estimate stream: timestamp mean_rad variance\n";
  for (const GaussianScalarEstimate& e : stream) {
    out << fmt_g9(e.timestamp) << ' ' << fmt_g9(e.mean) << ' ' << fmt_g9(e.variance) << '\n';
  }
}

std::vector<GaussianScalarEstimate> read_estimate_stream(std::istream& in) {
  std::vector<GaussianScalarEstimate> stream;
  LineReader reader(in);
  double f[3];
  while (reader.next_fields(f)) {
    GaussianScalarEstimate e;
    e.timestamp = f[0];
    e.mean = f[1];
    e.variance = f[2];
    stream.push_back(e);
  }
  return stream;
}

void write_position_stream(std::ostream& out, std::span<const PositionSample> stream) {
  out << "# position stream: timestamp x y\n";
  for (const PositionSample& s : stream) {
    out << fmt_g9(s.timestamp) << ' ' << fmt_g9(s.x) << ' ' << fmt_g9(s.y) << '\n';
  }
}

std::vector<PositionSample> read_position_stream(std::istream& in) {
  std::vector<PositionSample> stream;
  LineReader reader(in);
  double f[3];
  while (reader.next_fields(f)) {
    stream.push_back(PositionSample{f[0], f[1], f[2]});
  }
  return stream;
}

void write_pose_stream(std::ostream& out, std::span<const TrolleyPose> poses) {
  out << "# pose stream: timestamp x y yaw_rad\n";
  for (const TrolleyPose& p : poses) {
    out << fmt_g9(p.timestamp) << ' ' << fmt_g9(p.x) << ' ' << fmt_g9(p.y) << ' '
        << fmt_g9(p.yaw) << '\n';
  }
}

std::vector<TrolleyPose> read_pose_stream(std::istream& in) {
  std::vector<TrolleyPose> poses;
  LineReader reader(in);
  double f[4];
  while (reader.next_fields(f)) {
    TrolleyPose p;
    p.timestamp = f[0];
    p.x = f[1];
    p.y = f[2];
    p.yaw = f[3];
    poses.push_back(p);
  }
  return poses;
}

void write_pointcloud(std::ostream& out, const PointCloud& cloud) {
  if (!cloud.origins.empty() && cloud.origins.size() != cloud.points.size()) {
    throw InputDomainError("write_pointcloud: origins length differs from points");
  }
  out << cloud.points.size() << ' ' << (cloud.has_origins() ? 1 : 0) << '\n';
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point3& p = cloud.points[i];
    out << fmt_g9(p.x) << ' ' << fmt_g9(p.y) << ' ' << fmt_g9(p.z);
    if (cloud.has_origins()) {
      const Point3& o = cloud.origins[i];
      out << ' ' << fmt_g9(o.x) << ' ' << fmt_g9(o.y) << ' ' << fmt_g9(o.z);
    }
    out << '\n';
  }
}

PointCloud read_pointcloud(std::istream& in) {
  LineReader reader(in);
  double header[2];
  if (!reader.next_fields(header)) throw IoError("pointcloud: missing header");
  if (header[0] < 0 || header[0] != std::floor(header[0]) ||
      (header[1] != 0.0 && header[1] != 1.0)) {
    throw IoError("pointcloud: bad header");
  }
  const auto n = static_cast<std::size_t>(header[0]);
  const bool has_origins = header[1] == 1.0;

  PointCloud cloud;
  cloud.points.reserve(n);
  if (has_origins) cloud.origins.reserve(n);
  double f6[6];
  double f3[3];
  for (std::size_t i = 0; i < n; ++i) {
    if (has_origins) {
      if (!reader.next_fields(f6)) throw IoError("pointcloud: truncated file");
      cloud.points.push_back(Point3{f6[0], f6[1], f6[2]});
      cloud.origins.push_back(Point3{f6[3], f6[4], f6[5]});
    } else {
      if (!reader.next_fields(f3)) throw IoError("pointcloud: truncated file");
      cloud.points.push_back(Point3{f3[0], f3[1], f3[2]});
    }
  }
  return cloud;
}

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create " + path);
  out << contents;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace scanmap
