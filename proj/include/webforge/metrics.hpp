#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "webforge/archive.hpp"
#include "webforge/genclient.hpp"
#include "webforge/proxy.hpp"
#include "webforge/shaper.hpp"

namespace webforge {

enum class Arm { original, generated };
std::string_view to_string(Arm arm) noexcept;
std::optional<Arm> parse_arm(std::string_view name) noexcept;

struct LoadMetrics {
  std::string page_url;
  Arm arm = Arm::original;
  int run_index = 0;
  double si_ms = 0;
  double plt_ms = 0;
  std::uint64_t bytes_downloaded = 0;

  bool operator==(const LoadMetrics&) const = default;
};

enum class Metric { si, plt };
std::string_view to_string(Metric metric) noexcept;

struct MetricDelta {
  std::string page_url;
  Metric metric = Metric::plt;
  double delta_ms = 0;  // original - generated; positive is a speedup
};

enum class DeltaMode {
  delta_of_medians,  // median(original) - median(generated)
  median_of_deltas,  // median over runs paired by run_index
};

inline constexpr int kReportVersion = 1;

/// Report document:
///   {"version": 1, "page_url": str, "arm"?: "original"|"generated",
///    "runs": [{"arm"?: ..., "run_index"?: int, "si_ms": num, "plt_ms": num, "bytes": int}]}
/// A run's arm overrides the document arm; one of them must be present.
/// Throws Error{SchemaViolation} naming the offending field.
std::vector<LoadMetrics> ingest_report(const nlohmann::json& report);
std::vector<LoadMetrics> ingest_report(std::string_view report_text);
nlohmann::json report_json(const std::vector<LoadMetrics>& runs);

/// Lower median: element (n-1)/2 of the sorted values. Requires n > 0.
double lower_median(std::vector<double> values);

/// All runs must belong to one page. Throws Error{MissingArm}.
MetricDelta compute_delta(const std::vector<LoadMetrics>& runs, Metric metric,
                          DeltaMode mode = DeltaMode::delta_of_medians);
/// One delta per page, in first-seen page order.
std::vector<MetricDelta> compute_deltas(const std::vector<LoadMetrics>& runs, Metric metric,
                                        DeltaMode mode = DeltaMode::delta_of_medians);

/// Sum of archived transfer sizes of the images `mode` would substitute.
std::uint64_t bandwidth_savings(const PageArchive& archive, const ServeMode& mode);

struct SimParams {
  int parallel_connections = 6;
  int generation_slots = 1;
  ServeMode serve_mode{Mode::generated_server, {}};
  std::uint64_t seed = 0;
};

/// Latency seed of the k-th substituted image (document order) for a run seed.
std::uint64_t generation_seed(std::uint64_t run_seed, std::size_t image_index) noexcept;

/// Images counted as above the fold: those flagged true, or the first three
/// manifest images when no image carries a flag.
std::vector<std::string> above_fold_urls(const PageArchive& archive);

/// Deterministic waterfall: the root loads first (rtt + size*8/bandwidth);
/// the remaining resources are then dispatched in archive order onto the
/// earliest-free of `parallel_connections`, each costing rtt + size*8/bandwidth.
/// In the generated arm substituted images instead wait for a generation slot
/// (FIFO, released at root completion) for sample_latency() and cost no
/// network time. PLT is the last completion; SI is the transfer-size-weighted
/// mean completion of the root and the above-fold images.
/// Throws Error{UnannotatedArchive} for the generated arm of an archive whose
/// images carry no prompts at all.
LoadMetrics simulate_load(const PageArchive& archive, const ConnectivityProfile& profile,
                          const LatencyProfile& latency, Arm arm, const SimParams& params = {});

/// `runs` simulations per arm with run seeds params.seed + i.
std::vector<LoadMetrics> simulate_runs(const PageArchive& archive, const ConnectivityProfile& profile,
                                       const LatencyProfile& latency, int runs, const SimParams& params = {});

/// Empirical CDF: distinct sorted values with the fraction of samples <= value.
std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values);
/// page_url,metric,delta_ms rows with three decimals.
std::string deltas_csv(const std::vector<MetricDelta>& deltas);
std::string cdf_csv(const std::vector<std::pair<double, double>>& cdf, std::string_view value_header = "value");

}  // namespace webforge
