#include "mobonet/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mobonet/warp.hpp"

namespace fs = std::filesystem;

namespace mobo {

void refresh_warp_errors(Sample& s) {
  s.warp_err_fwd = warping_error(s.frame1, s.frame2, s.fwd_flow);
  s.warp_err_bwd = warping_error(s.frame2, s.frame1, s.bwd_flow);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(ss >> e.frame1 >> e.frame2 >> e.fwd_flow >> e.bwd_flow >> e.gt_flow >> e.gt_boundary))
      throw FormatError("manifest line " + std::to_string(lineno) + ": expected 6 paths");
    std::string extra;
    if (ss >> extra)
      throw FormatError("manifest line " + std::to_string(lineno) + ": trailing field " + extra);
    for (std::string* p : {&e.frame1, &e.frame2, &e.fwd_flow, &e.bwd_flow, &e.gt_flow,
                           &e.gt_boundary})
      *p = (base / *p).string();
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  for (const auto& e : entries)
    os << e.frame1 << ' ' << e.frame2 << ' ' << e.fwd_flow << ' ' << e.bwd_flow << ' '
       << e.gt_flow << ' ' << e.gt_boundary << '\n';
  if (!os) throw IoError("write failed: " + path);
}

Sample load_sample(const ManifestEntry& entry) {
  Sample s;
  s.frame1 = read_ppm(entry.frame1);
  s.frame2 = read_ppm(entry.frame2);
  s.fwd_flow = read_flo(entry.fwd_flow);
  s.bwd_flow = read_flo(entry.bwd_flow);
  s.gt_flow = read_flo(entry.gt_flow);
  s.gt_boundary = read_pgm(entry.gt_boundary);
  for (float& v : s.gt_boundary.data) v = v >= 0.5f ? 1.0f : 0.0f;
  refresh_warp_errors(s);
  return s;
}

ManifestEntry save_sample(const std::string& dir, const std::string& basename, const Sample& s) {
  fs::create_directories(dir);
  ManifestEntry rel;
  rel.frame1 = basename + "_frame1.ppm";
  rel.frame2 = basename + "_frame2.ppm";
  rel.fwd_flow = basename + "_fwd.flo";
  rel.bwd_flow = basename + "_bwd.flo";
  rel.gt_flow = basename + "_gt.flo";
  rel.gt_boundary = basename + "_boundary.pgm";
  const fs::path base(dir);
  write_ppm((base / rel.frame1).string(), s.frame1);
  write_ppm((base / rel.frame2).string(), s.frame2);
  write_flo((base / rel.fwd_flow).string(), s.fwd_flow);
  write_flo((base / rel.bwd_flow).string(), s.bwd_flow);
  write_flo((base / rel.gt_flow).string(), s.gt_flow);
  write_pgm8((base / rel.gt_boundary).string(), s.gt_boundary);
  return rel;
}

}  // namespace mobo
