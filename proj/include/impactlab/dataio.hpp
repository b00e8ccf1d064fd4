#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "impactlab/simulator.hpp"

namespace impactlab {

inline constexpr std::string_view kFillsHeader =
    "order_id,sign,quantity,duration_days,start_logprice,end_logprice,sigma,daily_volume";

// Documented curve columns, followed by the bin edges and the standard error
// of the variance.
inline constexpr std::string_view kCurvesHeader =
    "q_over_v_bin_center,t_bucket_days,n_obs,mean_impact,var_price_change,std_err_mean,"
    "q_over_v_lo,q_over_v_hi,std_err_var";

inline constexpr std::string_view kCurvesRequiredHeader =
    "q_over_v_bin_center,t_bucket_days,n_obs,mean_impact,var_price_change,std_err_mean";

// Sink failure. Reports how many bytes made it out before the failure.
class WriteError : public std::runtime_error {
 public:
  WriteError(const std::string& what, std::size_t bytes_written)
      : std::runtime_error(what), bytes_written_(bytes_written) {}
  std::size_t bytes_written() const noexcept { return bytes_written_; }

 private:
  std::size_t bytes_written_;
};

/// Shortest decimal string that parses back to the same double.
std::string format_double(double x);

/// Streaming reader for the fills CSV. Row numbers are 1-based file lines
/// (the header is row 1).
class FillsReader {
 public:
  explicit FillsReader(std::istream& in);

  /// Next record, or nullopt at end of input. Throws DataError with row and
  /// column context.
  std::optional<MetaorderRecord> next();

  std::size_t rows_read() const noexcept { return rows_read_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 1;
  std::size_t rows_read_ = 0;
  std::unordered_set<std::uint64_t> seen_ids_;
  std::string line_;
};

std::vector<MetaorderRecord> read_fills(std::istream& in);
std::vector<MetaorderRecord> read_fills_file(const std::filesystem::path& path);

/// Streaming writer; emits the header on construction.
class FillsWriter {
 public:
  explicit FillsWriter(std::ostream& out);

  void write(const MetaorderRecord& record);
  void write(std::span<const MetaorderRecord> records);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t bytes_written() const noexcept { return bytes_; }

 private:
  void emit(std::string_view text);

  std::ostream& out_;
  std::string buffer_;
  std::size_t rows_ = 0;
  std::size_t bytes_ = 0;
};

/// Writes header plus one row per record; returns the row count.
std::size_t write_fills(std::span<const MetaorderRecord> records, std::ostream& out);

struct CurveRow {
  double q_over_v_center = 0.0;
  double t_bucket = 0.0;
  std::uint64_t n_obs = 0;
  double mean_impact = 0.0;
  double var_price_change = 0.0;
  double std_err_mean = 0.0;
  double q_over_v_lo = 0.0;
  double q_over_v_hi = 0.0;
  double std_err_var = 0.0;
};

std::size_t write_curves(std::span<const CurveRow> rows, std::ostream& out);

/// Accepts files carrying at least the documented six columns. Without the
/// edge columns the bin collapses to its center; without std_err_var the
/// Gaussian value var * sqrt(2/(n-1)) is used.
std::vector<CurveRow> read_curves(std::istream& in);

/// True when the first line of the file is the fills header.
bool looks_like_fills(const std::filesystem::path& path);

}  // namespace impactlab
