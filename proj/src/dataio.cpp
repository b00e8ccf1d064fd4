#include "impactlab/dataio.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "impactlab/errors.hpp"

namespace impactlab {

namespace {

constexpr std::array<std::string_view, 8> kFillsColumns = {
    "order_id", "sign", "quantity", "duration_days",
    "start_logprice", "end_logprice", "sigma", "daily_volume"};

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void strip_line_ending(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void strip_bom(std::string& line) {
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
}

[[noreturn]] void row_error(std::size_t row, std::string_view column, const std::string& msg) {
  throw DataError("row " + std::to_string(row) + ", " + std::string(column) + ": " + msg, row,
                  std::string(column));
}

double parse_double(std::string_view text, std::size_t row, std::string_view column) {
  std::string_view body = text;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (body.empty() || ec != std::errc() || ptr != body.data() + body.size())
    row_error(row, column, "not a number: '" + std::string(text) + "'");
  if (!std::isfinite(value)) row_error(row, column, "must be finite");
  return value;
}

std::uint64_t parse_uint(std::string_view text, std::size_t row, std::string_view column) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    row_error(row, column, "not a non-negative integer: '" + std::string(text) + "'");
  return value;
}

double positive_field(std::string_view text, std::size_t row, std::string_view column) {
  const double v = parse_double(text, row, column);
  if (!(v > 0.0)) row_error(row, column, "must be > 0");
  return v;
}

}  // namespace

std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

// ---- fills ---------------------------------------------------------------

FillsReader::FillsReader(std::istream& in) : in_(in) {
  if (!std::getline(in_, line_)) throw SchemaError("fills: missing header row", 1);
  strip_line_ending(line_);
  strip_bom(line_);
  if (line_ != kFillsHeader) {
    throw SchemaError("fills: header mismatch: expected '" + std::string(kFillsHeader) +
                          "', got '" + line_ + "'",
                      1);
  }
}

std::optional<MetaorderRecord> FillsReader::next() {
  if (!std::getline(in_, line_)) return std::nullopt;
  ++line_no_;
  strip_line_ending(line_);
  const std::size_t row = line_no_;
  const auto fields = split(line_);
  if (fields.size() != kFillsColumns.size()) {
    throw DataError("row " + std::to_string(row) + ": expected " +
                        std::to_string(kFillsColumns.size()) + " fields, got " +
                        std::to_string(fields.size()),
                    row);
  }

  MetaorderRecord r;
  r.order_id = parse_uint(fields[0], row, kFillsColumns[0]);
  if (fields[1] == "+1" || fields[1] == "1") {
    r.sign = 1;
  } else if (fields[1] == "-1") {
    r.sign = -1;
  } else {
    row_error(row, kFillsColumns[1], "must be +1 or -1, got '" + std::string(fields[1]) + "'");
  }
  r.quantity = positive_field(fields[2], row, kFillsColumns[2]);
  r.duration = positive_field(fields[3], row, kFillsColumns[3]);
  r.start_logprice = parse_double(fields[4], row, kFillsColumns[4]);
  r.end_logprice = parse_double(fields[5], row, kFillsColumns[5]);
  r.sigma = positive_field(fields[6], row, kFillsColumns[6]);
  r.daily_volume = positive_field(fields[7], row, kFillsColumns[7]);
  if (!std::isfinite(r.price_change()))
    row_error(row, kFillsColumns[5], "end_logprice - start_logprice is not finite");
  if (!seen_ids_.insert(r.order_id).second)
    row_error(row, kFillsColumns[0], "duplicate order_id " + std::to_string(r.order_id));
  ++rows_read_;
  return r;
}

std::vector<MetaorderRecord> read_fills(std::istream& in) {
  FillsReader reader(in);
  std::vector<MetaorderRecord> out;
  while (auto r = reader.next()) out.push_back(*r);
  return out;
}

std::vector<MetaorderRecord> read_fills_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open fills file " + path.string());
  return read_fills(in);
}

FillsWriter::FillsWriter(std::ostream& out) : out_(out) {
  emit(std::string(kFillsHeader) + "\n");
}

void FillsWriter::emit(std::string_view text) {
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out_) {
    throw WriteError("fills: write failed after " + std::to_string(bytes_) + " bytes", bytes_);
  }
  bytes_ += text.size();
}

void FillsWriter::write(const MetaorderRecord& r) {
  buffer_.clear();
  buffer_ += std::to_string(r.order_id);
  buffer_ += r.sign > 0 ? ",+1," : ",-1,";
  for (double v : {r.quantity, r.duration, r.start_logprice, r.end_logprice, r.sigma}) {
    buffer_ += format_double(v);
    buffer_ += ',';
  }
  buffer_ += format_double(r.daily_volume);
  buffer_ += '\n';
  emit(buffer_);
  ++rows_;
}

void FillsWriter::write(std::span<const MetaorderRecord> records) {
  for (const auto& r : records) write(r);
}

std::size_t write_fills(std::span<const MetaorderRecord> records, std::ostream& out) {
  FillsWriter writer(out);
  writer.write(records);
  out.flush();
  if (!out) throw WriteError("fills: flush failed", writer.bytes_written());
  return writer.rows();
}

// ---- curves --------------------------------------------------------------

std::size_t write_curves(std::span<const CurveRow> rows, std::ostream& out) {
  out << kCurvesHeader << '\n';
  for (const auto& c : rows) {
    out << format_double(c.q_over_v_center) << ',' << format_double(c.t_bucket) << ','
        << c.n_obs << ',' << format_double(c.mean_impact) << ','
        << format_double(c.var_price_change) << ',' << format_double(c.std_err_mean) << ','
        << format_double(c.q_over_v_lo) << ',' << format_double(c.q_over_v_hi) << ','
        << format_double(c.std_err_var) << '\n';
  }
  out.flush();
  if (!out) throw WriteError("curves: write failed", 0);
  return rows.size();
}

std::vector<CurveRow> read_curves(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("curves: missing header row", 1);
  strip_line_ending(line);
  strip_bom(line);
  const bool full = line == kCurvesHeader;
  if (!full && line != kCurvesRequiredHeader) {
    throw SchemaError("curves: header mismatch: expected '" + std::string(kCurvesHeader) +
                          "', got '" + line + "'",
                      1);
  }
  const auto names = split(full ? kCurvesHeader : kCurvesRequiredHeader);
  std::vector<CurveRow> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    strip_line_ending(line);
    const auto f = split(line);
    if (f.size() != names.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                          std::to_string(names.size()) + " fields, got " +
                          std::to_string(f.size()),
                      row);
    }
    CurveRow c;
    c.q_over_v_center = positive_field(f[0], row, names[0]);
    c.t_bucket = positive_field(f[1], row, names[1]);
    c.n_obs = parse_uint(f[2], row, names[2]);
    c.mean_impact = parse_double(f[3], row, names[3]);
    c.var_price_change = parse_double(f[4], row, names[4]);
    c.std_err_mean = parse_double(f[5], row, names[5]);
    if (c.n_obs < 2) row_error(row, names[2], "must be >= 2");
    if (c.var_price_change < 0.0) row_error(row, names[4], "must be >= 0");
    if (c.std_err_mean < 0.0) row_error(row, names[5], "must be >= 0");
    if (full) {
      c.q_over_v_lo = positive_field(f[6], row, names[6]);
      c.q_over_v_hi = positive_field(f[7], row, names[7]);
      c.std_err_var = parse_double(f[8], row, names[8]);
      if (!(c.q_over_v_lo <= c.q_over_v_center && c.q_over_v_center <= c.q_over_v_hi))
        row_error(row, names[0], "bin center outside [q_over_v_lo, q_over_v_hi]");
      if (c.std_err_var < 0.0) row_error(row, names[8], "must be >= 0");
    } else {
      c.q_over_v_lo = c.q_over_v_hi = c.q_over_v_center;
      c.std_err_var =
          c.var_price_change * std::sqrt(2.0 / static_cast<double>(c.n_obs - 1));
    }
    rows.push_back(c);
  }
  return rows;
}

bool looks_like_fills(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  if (!in || !std::getline(in, line)) return false;
  strip_line_ending(line);
  strip_bom(line);
  return line == kFillsHeader;
}

}  // namespace impactlab
