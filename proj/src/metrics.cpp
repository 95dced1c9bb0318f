#include "sedattack/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "sedattack/error.hpp"

namespace sedattack {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  se += o.se;
  fe += o.fe;
  ue += o.ue;
  ne += o.ne;
  return *this;
}

EditCounts count_edits(const EventActivityMatrix& clean, const EventActivityMatrix& adv,
                       const TargetRegion& region, const TargetLabelMatrix& y_star) {
  const BinaryGrid& a = adv.active;
  if (!clean.active.same_shape(a) || !region.member.same_shape(a) || !y_star.y_star.same_shape(a)) {
    throw ShapeError("count_edits: activity, region and target matrices must share one shape");
  }
  EditCounts c;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (region.member.data()[i]) {
      (a.data()[i] == y_star.y_star.data()[i] ? c.se : c.fe)++;
    } else {
      (a.data()[i] != clean.active.data()[i] ? c.ue : c.ne)++;
    }
  }
  return c;
}

MetricsReport compute_report(const EditCounts& counts, SnrDb snr) {
  MetricsReport r;
  r.counts = counts;
  r.ep = ratio(counts.se + counts.ne, counts.total());
  r.asr = ratio(counts.se, counts.se + counts.fe);
  r.uer = ratio(counts.ue, counts.ue + counts.ne);
  r.snr = snr;
  r.runs = 1;
  r.infinite_snr_runs = snr.is_infinite() ? 1 : 0;
  return r;
}

MetricsReport compute_report(const EditCounts& counts, const Waveform& clean, const Waveform& adv) {
  return compute_report(counts, snr_db(clean, adv));
}

MetricsReport aggregate(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ValidationError("aggregate needs at least one report");
  EditCounts total;
  double snr_sum = 0.0;
  std::size_t finite = 0, infinite = 0, runs = 0;
  for (const auto& r : reports) {
    total += r.counts;
    runs += r.runs;
    infinite += r.infinite_snr_runs;
    if (!r.snr.is_infinite()) {
      const std::size_t w = r.runs - r.infinite_snr_runs;
      snr_sum += r.snr.db() * static_cast<double>(w);
      finite += w;
    }
  }
  MetricsReport out = compute_report(total, finite ? SnrDb::finite(snr_sum / static_cast<double>(finite))
                                                   : SnrDb::infinite());
  out.runs = runs;
  out.infinite_snr_runs = infinite;
  return out;
}

bool ep_identity_holds(const MetricsReport& r, double tol) {
  const auto& c = r.counts;
  const double o = static_cast<double>(c.total()), t = static_cast<double>(c.target_size());
  if (c.total() == 0) return !r.ep.has_value();
  const double rhs = (r.asr ? *r.asr * t : 0.0) + (r.uer ? (1.0 - *r.uer) * (o - t) : 0.0);
  return r.ep && std::abs(*r.ep * o - rhs) <= tol * std::max(1.0, o);
}

std::string format_ratio(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::string format_snr(SnrDb snr) {
  if (snr.is_infinite()) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", snr.db());
  return buf;
}

std::string metrics_csv_header() { return "ep,asr,uer,snr_db,se,fe,ue,ne"; }

std::string metrics_csv_fields(const MetricsReport& r) {
  const auto& c = r.counts;
  return format_ratio(r.ep) + "," + format_ratio(r.asr) + "," + format_ratio(r.uer) + "," +
         format_snr(r.snr) + "," + std::to_string(c.se) + "," + std::to_string(c.fe) + "," +
         std::to_string(c.ue) + "," + std::to_string(c.ne);
}

nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {
      {"ep", opt(r.ep)},
      {"asr", opt(r.asr)},
      {"uer", opt(r.uer)},
      {"snr_db", r.snr.is_infinite() ? nlohmann::json("inf") : nlohmann::json(r.snr.db())},
      {"se", r.counts.se},
      {"fe", r.counts.fe},
      {"ue", r.counts.ue},
      {"ne", r.counts.ne},
      {"runs", r.runs},
      {"infinite_snr_runs", r.infinite_snr_runs},
  };
}

}  // namespace sedattack
