#pragma once

// Frame-level edit accounting for targeted attacks: successful, failed,
// unintended and unchanged (SE / FE / UE / NE) pairs and the ratios built on
// them.

#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "sedattack/grid.hpp"
#include "sedattack/model.hpp"
#include "sedattack/signal.hpp"
#include "sedattack/target.hpp"

namespace sedattack {

struct EditCounts {
  std::size_t se = 0;
  std::size_t fe = 0;
  std::size_t ue = 0;
  std::size_t ne = 0;

  std::size_t target_size() const { return se + fe; }
  std::size_t total() const { return se + fe + ue + ne; }
  EditCounts& operator+=(const EditCounts& o);
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

// Ratios are empty when undefined (zero denominator).
struct MetricsReport {
  EditCounts counts;
  std::optional<double> ep;
  std::optional<double> asr;
  std::optional<double> uer;
  // Per run: SNR of the evaluated audio. Aggregated: mean over finite runs,
  // infinite when every run is.
  SnrDb snr = SnrDb::infinite();
  std::size_t runs = 1;
  std::size_t infinite_snr_runs = 0;
};

EditCounts count_edits(const EventActivityMatrix& clean, const EventActivityMatrix& adv,
                       const TargetRegion& region, const TargetLabelMatrix& y_star);

MetricsReport compute_report(const EditCounts& counts, SnrDb snr);
MetricsReport compute_report(const EditCounts& counts, const Waveform& clean, const Waveform& adv);

// Micro-average: counts summed, then ratios. Throws ValidationError on empty.
MetricsReport aggregate(std::span<const MetricsReport> reports);

// EP * |O| == ASR * |T| + (1 - UER) * (|O| - |T|), with undefined terms
// contributing zero weight.
bool ep_identity_holds(const MetricsReport& r, double tol = 1e-12);

// "NA" for undefined ratios, "inf" for the infinite SNR; fixed 6 decimals.
std::string format_ratio(const std::optional<double>& v);
std::string format_snr(SnrDb snr);

// Comma-separated ep,asr,uer,snr_db,se,fe,ue,ne.
std::string metrics_csv_header();
std::string metrics_csv_fields(const MetricsReport& r);

nlohmann::json to_json(const MetricsReport& r);

}  // namespace sedattack
