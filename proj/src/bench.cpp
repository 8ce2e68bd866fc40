#include "rotla/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "rotla/recurrence.hpp"
#include "rotla/rng.hpp"

namespace rotla::bench {

Mode parse_mode(const std::string& name) {
  if (name == "scan-sequential") return Mode::scan_sequential;
  if (name == "scan-chunked") return Mode::scan_chunked;
  if (name == "attention-matrix") return Mode::attention_matrix;
  contract_fail("unknown bench mode \"" + name + "\" (scan-sequential|scan-chunked|attention-matrix)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::scan_sequential: return "scan-sequential";
    case Mode::scan_chunked: return "scan-chunked";
    case Mode::attention_matrix: return "attention-matrix";
  }
  return "?";
}

Row run(Mode mode, std::int64_t seq_len, std::int64_t dim, std::int64_t reps, std::int64_t chunk,
        std::uint64_t seed) {
  check(seq_len >= 1 && dim >= 1 && reps >= 1, "bench needs positive seq_len/dim/reps");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Tensor q = rng.gaussian_tensor({seq_len, dim}, scale);
  Tensor k = rng.gaussian_tensor({seq_len, dim}, scale);
  Tensor v = rng.gaussian_tensor({seq_len, dim}, scale);
  recurrence::TransitionSpec spec =
      recurrence::TransitionSpec::decay_spec(rng.uniform_tensor({seq_len, dim}, 0.85, 0.999));

  // correctness gate before any timing
  recurrence::ScanResult seq_ref = recurrence::scan(q, k, v, spec);
  if (mode == Mode::scan_chunked) {
    recurrence::ScanResult ch = recurrence::scan(q, k, v, spec, false, recurrence::ScanMode::chunked, chunk);
    const double dev = max_abs_diff(seq_ref.outputs, ch.outputs);
    check(dev <= 1e-12, "chunked scan deviates from sequential by " + std::to_string(dev));
  } else if (mode == Mode::attention_matrix) {
    Tensor via = recurrence::scan_via_attention(q, k, v, spec);
    const double dev = max_abs_diff(seq_ref.outputs, via);
    check(dev <= 1e-10, "attention-matrix outputs deviate from the scan by " + std::to_string(dev));
  }

  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  volatile double sink = 0.0;
  for (std::int64_t r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    switch (mode) {
      case Mode::scan_sequential: {
        recurrence::ScanResult res = recurrence::scan(q, k, v, spec);
        sink = sink + res.outputs.at(seq_len - 1, 0);
        break;
      }
      case Mode::scan_chunked: {
        recurrence::ScanResult res =
            recurrence::scan(q, k, v, spec, false, recurrence::ScanMode::chunked, chunk);
        sink = sink + res.outputs.at(seq_len - 1, 0);
        break;
      }
      case Mode::attention_matrix: {
        Tensor out = recurrence::scan_via_attention(q, k, v, spec);
        sink = sink + out.at(seq_len - 1, 0);
        break;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  Row row;
  row.seq_len = seq_len;
  row.median_seconds = times[times.size() / 2];
  row.per_token_us = 1e6 * row.median_seconds / static_cast<double>(seq_len);
  return row;
}

double loglog_slope(const std::vector<Row>& rows) {
  check(rows.size() >= 2, "slope needs at least two sizes");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rows.size());
  for (const Row& r : rows) {
    const double x = std::log(static_cast<double>(r.seq_len));
    const double y = std::log(std::max(r.median_seconds, 1e-12));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string csv_header() { return "mode,seq_len,dim,median_seconds,per_token_us"; }

std::string to_csv_row(Mode mode, std::int64_t dim, const Row& row) {
  std::ostringstream os;
  os << mode_name(mode) << "," << row.seq_len << "," << dim << "," << row.median_seconds << ","
     << row.per_token_us;
  return os.str();
}

}  // namespace rotla::bench
