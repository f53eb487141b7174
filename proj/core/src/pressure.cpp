#include "presslm/pressure.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "presslm/errors.hpp"

namespace presslm {

namespace {

constexpr char kMapMagic[4] = {'P', 'M', 'A', 'P'};
constexpr std::uint32_t kMapVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 24) & 0xff)};
  os.write(bytes, 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) {
    throw ParseError(std::string("pressure map: truncated ") + what);
  }
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

double parse_field(std::string_view field, std::size_t line_no) {
  // Trim surrounding spaces.
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) {
    field.remove_prefix(1);
  }
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("pressure map: bad numeric field '" + std::string(field) + "' on line " +
                     std::to_string(line_no));
  }
  return v;
}

double normalize_raw(double raw, const SensorGeometry& g) {
  if (raw < g.value_min) {
    throw ParseError("pressure map: raw value " + std::to_string(raw) +
                     " below declared minimum " + std::to_string(g.value_min));
  }
  const double span = g.value_max - g.value_min;
  double v = (raw - g.value_min) / span;
  if (v > 1.0) v = 1.0;  // saturated sensel
  return v;
}

PressureMap from_raw(std::vector<double> raw, std::size_t h, std::size_t w,
                     const SensorGeometry& g) {
  if (h != g.rows || w != g.cols) {
    throw ParseError("pressure map: dimension mismatch, file is " + std::to_string(h) + "x" +
                     std::to_string(w) + " but geometry declares " + std::to_string(g.rows) +
                     "x" + std::to_string(g.cols));
  }
  for (double& v : raw) {
    v = normalize_raw(v, g);
  }
  PressureMap map;
  map.height = h;
  map.width = w;
  map.values = Tensor({h, w}, std::move(raw));
  return map;
}

}  // namespace

void SensorGeometry::validate() const {
  if (rows == 0 || cols == 0) {
    throw ConfigError("geometry: rows and cols must be positive");
  }
  if (spacing_mm <= 0.0 || sampling_interval_ms <= 0.0) {
    throw ConfigError("geometry: pitch and sampling interval must be positive");
  }
  if (!(value_min < value_max)) {
    throw ConfigError("geometry: value range requires min < max");
  }
}

SensorGeometry SensorGeometry::load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw IoError("geometry: cannot open '" + path + "'");
  }
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("geometry: invalid JSON in '" + path + "': " + e.what());
  }
  SensorGeometry g;
  try {
    g.rows = j.at("rows").get<std::size_t>();
    g.cols = j.at("cols").get<std::size_t>();
    g.spacing_mm = j.at("spacing_mm").get<double>();
    g.sampling_interval_ms = j.at("sampling_interval_ms").get<double>();
    g.value_min = j.at("value_min").get<double>();
    g.value_max = j.at("value_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("geometry: missing or mistyped field in '" + path + "': " + e.what());
  }
  g.validate();
  return g;
}

void SensorGeometry::save_json(const std::string& path) const {
  nlohmann::json j;
  j["rows"] = rows;
  j["cols"] = cols;
  j["spacing_mm"] = spacing_mm;
  j["sampling_interval_ms"] = sampling_interval_ms;
  j["value_min"] = value_min;
  j["value_max"] = value_max;
  std::ofstream os(path);
  if (!os) {
    throw IoError("geometry: cannot write '" + path + "'");
  }
  os << j.dump(2) << "\n";
}

PressureMap load_pressure_map(std::istream& in, PressureFormat format,
                              const SensorGeometry& geometry) {
  geometry.validate();
  if (format == PressureFormat::csv) {
    std::vector<double> raw;
    std::string line;
    std::size_t width = 0;
    std::size_t rows = 0;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") {
        continue;
      }
      std::size_t fields = 0;
      std::size_t start = 0;
      while (true) {
        const std::size_t comma = line.find(',', start);
        const std::string_view field(line.data() + start,
                                     (comma == std::string::npos ? line.size() : comma) - start);
        raw.push_back(parse_field(field, line_no));
        ++fields;
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (width == 0) {
        width = fields;
      } else if (fields != width) {
        throw ParseError("pressure map: ragged row on line " + std::to_string(line_no) + " (" +
                         std::to_string(fields) + " fields, expected " + std::to_string(width) +
                         ")");
      }
      ++rows;
    }
    if (rows == 0) {
      throw ParseError("pressure map: empty CSV input");
    }
    return from_raw(std::move(raw), rows, width, geometry);
  }

  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMapMagic, 4) != 0) {
    throw ParseError("pressure map: bad magic (expected PMAP)");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kMapVersion) {
    throw ParseError("pressure map: unsupported version " + std::to_string(version));
  }
  const std::uint32_t h = read_u32(in, "height");
  const std::uint32_t w = read_u32(in, "width");
  if (h == 0 || w == 0) {
    throw ParseError("pressure map: zero dimension in header");
  }
  std::vector<double> raw(static_cast<std::size_t>(h) * w);
  for (double& v : raw) {
    v = static_cast<double>(std::bit_cast<float>(read_u32(in, "values")));
  }
  return from_raw(std::move(raw), h, w, geometry);
}

PressureMap load_pressure_map_file(const std::string& path, const SensorGeometry& geometry) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw IoError("pressure map: cannot open '" + path + "'");
  }
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  return load_pressure_map(is, csv ? PressureFormat::csv : PressureFormat::binary, geometry);
}

void save_pressure_map(const PressureMap& map, std::ostream& out, PressureFormat format,
                       const SensorGeometry& geometry) {
  const double span = geometry.value_max - geometry.value_min;
  if (format == PressureFormat::csv) {
    std::ostringstream os;
    os.precision(9);
    for (std::size_t r = 0; r < map.height; ++r) {
      for (std::size_t c = 0; c < map.width; ++c) {
        if (c) os << ',';
        os << geometry.value_min + map.at(r, c) * span;
      }
      os << '\n';
    }
    out << os.str();
    return;
  }
  out.write(kMapMagic, 4);
  write_u32(out, kMapVersion);
  write_u32(out, static_cast<std::uint32_t>(map.height));
  write_u32(out, static_cast<std::uint32_t>(map.width));
  for (double v : map.values.data()) {
    const float raw = static_cast<float>(geometry.value_min + v * span);
    write_u32(out, std::bit_cast<std::uint32_t>(raw));
  }
}

void save_pressure_map_file(const PressureMap& map, const std::string& path,
                            const SensorGeometry& geometry) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw IoError("pressure map: cannot write '" + path + "'");
  }
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  save_pressure_map(map, os, csv ? PressureFormat::csv : PressureFormat::binary, geometry);
}

PressureStats compute_stats(const PressureMap& map) {
  const auto& v = map.values.data();
  PressureStats st;
  st.max = v[0];
  st.min = v[0];
  double sum = 0.0;
  for (double x : v) {
    st.max = std::max(st.max, x);
    st.min = std::min(st.min, x);
    sum += x;
  }
  const double n = static_cast<double>(v.size());
  st.mean = sum / n;
  double sq = 0.0;
  for (double x : v) {
    const double c = x - st.mean;
    sq += c * c;
  }
  st.variance = sq / n;
  return st;
}

PressureMap synth_posture(const SyntheticPostureSpec& spec, const SensorGeometry& geometry,
                          std::uint64_t seed) {
  geometry.validate();
  const double h = static_cast<double>(geometry.rows);
  const double w = static_cast<double>(geometry.cols);
  for (const PostureBlob& b : spec.blobs) {
    if (b.center_row < 0.0 || b.center_row >= h || b.center_col < 0.0 || b.center_col >= w) {
      throw ConfigError("synth_posture: blob center (" + std::to_string(b.center_row) + ", " +
                        std::to_string(b.center_col) + ") outside " +
                        std::to_string(geometry.rows) + "x" + std::to_string(geometry.cols) +
                        " grid");
    }
    if (b.radial_std < 0.0) {
      throw ConfigError("synth_posture: negative blob std");
    }
  }
  if (spec.noise_floor < 0.0) {
    throw ConfigError("synth_posture: negative noise floor");
  }

  // Canonical blob order makes the output independent of list permutation.
  std::vector<PostureBlob> blobs = spec.blobs;
  std::sort(blobs.begin(), blobs.end(), [](const PostureBlob& a, const PostureBlob& b) {
    return std::tie(a.center_row, a.center_col, a.amplitude, a.radial_std) <
           std::tie(b.center_row, b.center_col, b.amplitude, b.radial_std);
  });

  PressureMap map;
  map.height = geometry.rows;
  map.width = geometry.cols;
  map.values = Tensor::zeros({geometry.rows, geometry.cols});
  for (const PostureBlob& b : blobs) {
    if (b.radial_std == 0.0) {
      const std::size_t r = static_cast<std::size_t>(std::llround(b.center_row));
      const std::size_t c = static_cast<std::size_t>(std::llround(b.center_col));
      if (r < map.height && c < map.width) {
        map.at(r, c) += b.amplitude;
      }
      continue;
    }
    const double inv2s2 = 1.0 / (2.0 * b.radial_std * b.radial_std);
    for (std::size_t r = 0; r < map.height; ++r) {
      const double dr = static_cast<double>(r) - b.center_row;
      for (std::size_t c = 0; c < map.width; ++c) {
        const double dc = static_cast<double>(c) - b.center_col;
        map.at(r, c) += b.amplitude * std::exp(-(dr * dr + dc * dc) * inv2s2);
      }
    }
  }
  if (spec.noise_floor > 0.0) {
    CounterRng rng(seed);
    for (double& v : map.values.data()) {
      v += spec.noise_floor * rng.uniform();
    }
  }
  for (double& v : map.values.data()) {
    v = std::clamp(v, 0.0, 1.0);
  }
  map.values.quantize();
  return map;
}

std::pair<double, double> half_pressure_sums(const PressureMap& map) {
  double left = 0.0, right = 0.0;
  const std::size_t mid = map.width / 2;
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      (c < mid ? left : right) += map.at(r, c);
    }
  }
  return {left, right};
}

namespace {

std::string format_fixed(double v, int decimals) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

}  // namespace

std::string template_annotation(const PressureMap& map, const SyntheticPostureSpec& spec,
                                const PressureStats& stats) {
  double total = 0.0;
  for (double v : map.values.data()) {
    total += v;
  }
  if (total == 0.0) {
    return "no seat contact detected";
  }

  static constexpr const char* kQuadrantNames[4] = {"front-left", "front-right", "rear-left",
                                                    "rear-right"};
  double quadrant_sum[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t mid_r = map.height / 2;
  const std::size_t mid_c = map.width / 2;
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      const int q = (r < mid_r ? 0 : 2) + (c < mid_c ? 0 : 1);
      quadrant_sum[q] += map.at(r, c);
    }
  }
  int order[4] = {0, 1, 2, 3};
  std::stable_sort(order, order + 4,
                   [&](int a, int b) { return quadrant_sum[a] > quadrant_sum[b]; });

  std::string regions;
  for (int q : order) {
    if (quadrant_sum[q] <= 0.1 * total && !regions.empty()) break;
    if (!regions.empty()) regions += ", ";
    regions += kQuadrantNames[q];
  }

  const auto [left, right] = half_pressure_sums(map);
  std::string balance;
  if (right == 0.0) {
    balance = "left-only contact";
  } else if (left == 0.0) {
    balance = "right-only contact";
  } else {
    balance = "left/right pressure ratio " + format_fixed(left / right, 2);
  }

  std::string label = spec.posture_label.empty() ? "unlabeled" : spec.posture_label;
  return "posture " + label + ": dominant contact " + regions + "; " + balance + "; peak " +
         format_fixed(stats.max, 2) + ", mean " + format_fixed(stats.mean, 3);
}

SyntheticPostureSpec random_posture_spec(const SensorGeometry& geometry, CounterRng& rng) {
  SyntheticPostureSpec spec;
  const double h = static_cast<double>(geometry.rows);
  const double w = static_cast<double>(geometry.cols);
  const std::size_t blob_count = 1 + static_cast<std::size_t>(rng.uniform() * 3.0);
  double row_acc = 0.0, col_acc = 0.0;
  for (std::size_t i = 0; i < blob_count; ++i) {
    PostureBlob b;
    b.center_row = (0.15 + 0.7 * rng.uniform()) * h;
    b.center_col = (0.15 + 0.7 * rng.uniform()) * w;
    b.amplitude = 0.5 + 0.5 * rng.uniform();
    b.radial_std = (0.06 + 0.08 * rng.uniform()) * std::min(h, w);
    row_acc += b.center_row;
    col_acc += b.center_col;
    spec.blobs.push_back(b);
  }
  spec.noise_floor = 0.02 + 0.03 * rng.uniform();

  const double mean_row = row_acc / static_cast<double>(blob_count);
  const double mean_col = col_acc / static_cast<double>(blob_count);
  std::string lean = mean_row < 0.45 * h ? "forward-lean" : (mean_row > 0.55 * h ? "reclined" : "upright");
  std::string side = mean_col < 0.45 * w ? "left-weighted"
                                         : (mean_col > 0.55 * w ? "right-weighted" : "centered");
  spec.posture_label = lean + ", " + side;
  return spec;
}

}  // namespace presslm
