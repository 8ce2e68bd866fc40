#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rotla::bench {

enum class Mode { scan_sequential, scan_chunked, attention_matrix };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct Row {
  std::int64_t seq_len = 0;
  double median_seconds = 0.0;
  double per_token_us = 0.0;
};

/// Time one decay-transition scan of the given mode at [T x dim] inputs.
/// Before timing, chunked output is gated against sequential at 1e-12 and
/// attention-matrix output against the scan; a violation is a contract
/// error.
Row run(Mode mode, std::int64_t seq_len, std::int64_t dim, std::int64_t reps, std::int64_t chunk = 32,
        std::uint64_t seed = 1);

/// Least-squares slope of log(total seconds) against log(T).
double loglog_slope(const std::vector<Row>& rows);

std::string csv_header();
std::string to_csv_row(Mode mode, std::int64_t dim, const Row& row);

}  // namespace rotla::bench
