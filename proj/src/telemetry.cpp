#include "sfc/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include <zlib.h>

#include "sfc/environment.hpp"
#include "sfc/error.hpp"
#include "sfc/json_io.hpp"

namespace sfc {

std::array<double, kFeatureCount> TelemetryRow::features() const {
  return {available_storage,
          available_cpu,
          static_cast<double>(local_sfc_count),
          static_cast<double>(global_sfc_count),
          static_cast<double>(local_vnf_count),
          static_cast<double>(global_vnf_count)};
}

void TelemetryLog::append(const std::vector<TelemetryRow>& rows) {
  if (rows.size() != dcs_.size())
    throw Error(Errc::SchemaError, "telemetry append needs one row per data center");
  const auto t = static_cast<std::int64_t>(steps());
  for (std::size_t d = 0; d < rows.size(); ++d) {
    if (rows[d].dc_id != dcs_[d] || rows[d].timestamp != t)
      throw Error(Errc::SchemaError, "telemetry rows out of order at t=" + std::to_string(t));
    const auto f = rows[d].features();
    values_.insert(values_.end(), f.begin(), f.end());
  }
}

TelemetryLog TelemetryLog::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, steps());
  TelemetryLog out(dcs_);
  if (begin >= end) return out;
  const std::size_t stride = dcs_.size() * kFeatureCount;
  out.values_.assign(values_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                     values_.begin() + static_cast<std::ptrdiff_t>(end * stride));
  return out;
}

TelemetryLog TelemetryLog::tail(std::size_t count) const {
  const std::size_t n = steps();
  return slice(n > count ? n - count : 0, n);
}

TelemetryLog TelemetryLog::downsample(std::size_t cadence) const {
  if (cadence <= 1) return *this;
  TelemetryLog out(dcs_);
  const std::size_t stride = dcs_.size() * kFeatureCount;
  for (std::size_t t = 0; t < steps(); t += cadence)
    out.values_.insert(out.values_.end(), values_.begin() + static_cast<std::ptrdiff_t>(t * stride),
                       values_.begin() + static_cast<std::ptrdiff_t>((t + 1) * stride));
  return out;
}

std::vector<TelemetryRow> record(const Environment& env, std::int64_t t) {
  const auto& dcs = env.dc_states();
  std::vector<std::int64_t> local_sfc(dcs.size(), 0);
  std::int64_t global_sfc = 0;
  for (const auto& p : env.progress()) {
    if (p.status != RequestStatus::InFlight) continue;
    ++global_sfc;
    std::vector<bool> touched(dcs.size(), false);
    for (const auto& st : p.stages)
      if (st.dc) touched[env.topology().index(*st.dc)] = true;
    for (std::size_t d = 0; d < dcs.size(); ++d) local_sfc[d] += touched[d] ? 1 : 0;
  }
  std::int64_t global_vnf = 0;
  for (const auto& s : dcs) global_vnf += static_cast<std::int64_t>(s.instances.size());

  std::vector<TelemetryRow> rows;
  rows.reserve(dcs.size());
  for (std::size_t d = 0; d < dcs.size(); ++d) {
    TelemetryRow r;
    r.timestamp = t;
    r.dc_id = dcs[d].id;
    r.available_storage = std::max(0.0, dcs[d].free_storage);
    r.available_cpu = std::max(0.0, dcs[d].free_cpu);
    r.local_sfc_count = local_sfc[d];
    r.global_sfc_count = global_sfc;
    r.local_vnf_count = static_cast<std::int64_t>(dcs[d].instances.size());
    r.global_vnf_count = global_vnf;
    rows.push_back(r);
  }
  return rows;
}

std::string telemetry_to_csv(const TelemetryLog& log) {
  std::ostringstream os;
  os.precision(17);
  os << kTelemetryHeader << '\n';
  for (std::size_t t = 0; t < log.steps(); ++t) {
    for (std::size_t d = 0; d < log.dcs().size(); ++d) {
      os << t << ',' << log.dcs()[d];
      for (std::size_t f = 0; f < kFeatureCount; ++f) os << ',' << log.at(t, d, f);
      os << '\n';
    }
  }
  return os.str();
}

namespace {

double parse_number(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw Error(Errc::SchemaError, "line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

}  // namespace

TelemetryLog telemetry_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::SchemaError, "empty telemetry file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTelemetryHeader) throw Error(Errc::SchemaError, "unexpected header '" + line + "'");

  struct Row {
    std::int64_t t;
    DcId dc;
    std::array<double, kFeatureCount> f;
  };
  std::vector<Row> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 2 + kFeatureCount)
      throw Error(Errc::SchemaError, "line " + std::to_string(lineno) + " has " +
                                         std::to_string(fields.size()) + " columns");
    Row r;
    r.t = static_cast<std::int64_t>(parse_number(fields[0], lineno));
    r.dc = static_cast<DcId>(parse_number(fields[1], lineno));
    for (std::size_t f = 0; f < kFeatureCount; ++f) r.f[f] = parse_number(fields[2 + f], lineno);
    rows.push_back(r);
  }
  if (rows.empty()) throw Error(Errc::SchemaError, "telemetry file has no rows");
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.t != b.t ? a.t < b.t : a.dc < b.dc; });

  std::vector<DcId> dcs;
  for (const auto& r : rows) {
    if (r.t != rows.front().t) break;
    dcs.push_back(r.dc);
  }
  if (rows.size() % dcs.size() != 0) throw Error(Errc::SchemaError, "ragged telemetry rows");
  TelemetryLog log(dcs);
  for (std::size_t i = 0; i < rows.size(); i += dcs.size()) {
    std::vector<TelemetryRow> block;
    for (std::size_t d = 0; d < dcs.size(); ++d) {
      const Row& r = rows[i + d];
      if (r.t != static_cast<std::int64_t>(i / dcs.size()) || r.dc != dcs[d])
        throw Error(Errc::SchemaError, "missing or duplicate cell near t=" + std::to_string(r.t));
      TelemetryRow tr;
      tr.timestamp = r.t;
      tr.dc_id = r.dc;
      tr.available_storage = r.f[0];
      tr.available_cpu = r.f[1];
      tr.local_sfc_count = static_cast<std::int64_t>(r.f[2]);
      tr.global_sfc_count = static_cast<std::int64_t>(r.f[3]);
      tr.local_vnf_count = static_cast<std::int64_t>(r.f[4]);
      tr.global_vnf_count = static_cast<std::int64_t>(r.f[5]);
      block.push_back(tr);
    }
    log.append(block);
  }
  return log;
}

namespace {

bool is_gzip_path(const std::filesystem::path& path) { return path.extension() == ".gz"; }

}  // namespace

void export_csv(const TelemetryLog& log, const std::filesystem::path& path) {
  if (log.empty()) throw Error(Errc::SchemaError, "refusing to export an empty telemetry log");
  const std::string text = telemetry_to_csv(log);
  if (!is_gzip_path(path)) {
    write_text(path, text);
    return;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  gzFile f = gzopen(path.string().c_str(), "wb");
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
  const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
  gzclose(f);
  if (written != static_cast<int>(text.size())) throw Error(Errc::IoError, "gzip write failed for " + path.string());
}

TelemetryLog load_csv(const std::filesystem::path& path) {
  if (!is_gzip_path(path)) return telemetry_from_csv(read_text(path));
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw Error(Errc::IoError, "cannot open " + path.string());
  std::string text;
  char buf[1 << 15];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) text.append(buf, static_cast<std::size_t>(n));
  gzclose(f);
  if (n < 0) throw Error(Errc::IoError, "gzip read failed for " + path.string());
  return telemetry_from_csv(text);
}

}  // namespace sfc
