#include "webforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "webforge/error.hpp"

namespace webforge {

using nlohmann::json;

std::string_view to_string(Arm arm) noexcept { return arm == Arm::original ? "original" : "generated"; }

std::optional<Arm> parse_arm(std::string_view name) noexcept {
  if (name == "original") return Arm::original;
  if (name == "generated") return Arm::generated;
  return std::nullopt;
}

std::string_view to_string(Metric metric) noexcept { return metric == Metric::si ? "si" : "plt"; }

namespace {

[[noreturn]] void violation(const std::string& field, const std::string& problem) {
  throw Error(ErrorKind::SchemaViolation, field + ": " + problem);
}

double nonnegative_number(const json& obj, const std::string& key, const std::string& field) {
  if (!obj.contains(key)) violation(field, "missing");
  const auto& v = obj[key];
  if (!v.is_number()) violation(field, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d) || d < 0) violation(field, "must be >= 0");
  return d;
}

Arm arm_field(const json& v, const std::string& field) {
  if (!v.is_string()) violation(field, "must be \"original\" or \"generated\"");
  auto arm = parse_arm(v.get<std::string>());
  if (!arm) violation(field, "must be \"original\" or \"generated\"");
  return *arm;
}

}  // namespace

std::vector<LoadMetrics> ingest_report(const json& report) {
  if (!report.is_object()) violation("$", "report must be an object");
  if (report.contains("version")) {
    if (!report["version"].is_number_integer() || report["version"].get<int>() != kReportVersion) {
      violation("version", "unsupported version");
    }
  }
  if (!report.contains("page_url") || !report["page_url"].is_string() || report["page_url"].get<std::string>().empty()) {
    violation("page_url", "must be a nonempty string");
  }
  std::optional<Arm> doc_arm;
  if (report.contains("arm")) doc_arm = arm_field(report["arm"], "arm");
  if (!report.contains("runs") || !report["runs"].is_array()) violation("runs", "must be an array");

  std::vector<LoadMetrics> out;
  std::map<Arm, int> next_index;
  const auto& runs = report["runs"];
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string prefix = "runs[" + std::to_string(i) + "]";
    const auto& run = runs[i];
    if (!run.is_object()) violation(prefix, "must be an object");
    LoadMetrics m;
    m.page_url = report["page_url"].get<std::string>();
    if (run.contains("arm")) {
      m.arm = arm_field(run["arm"], prefix + ".arm");
    } else if (doc_arm) {
      m.arm = *doc_arm;
    } else {
      violation(prefix + ".arm", "missing and no document-level arm");
    }
    if (run.contains("run_index")) {
      if (!run["run_index"].is_number_integer() || run["run_index"].get<long long>() < 0) {
        violation(prefix + ".run_index", "must be a nonnegative integer");
      }
      m.run_index = run["run_index"].get<int>();
    } else {
      m.run_index = next_index[m.arm];
    }
    next_index[m.arm] = m.run_index + 1;
    m.si_ms = nonnegative_number(run, "si_ms", prefix + ".si_ms");
    m.plt_ms = nonnegative_number(run, "plt_ms", prefix + ".plt_ms");
    if (!run.contains("bytes")) violation(prefix + ".bytes", "missing");
    if (!run["bytes"].is_number_integer() || run["bytes"].get<long long>() < 0) {
      violation(prefix + ".bytes", "must be a nonnegative integer");
    }
    m.bytes_downloaded = run["bytes"].get<std::uint64_t>();
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<LoadMetrics> ingest_report(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    violation("$", std::string("not valid JSON: ") + e.what());
  }
  return ingest_report(doc);
}

json report_json(const std::vector<LoadMetrics>& runs) {
  json doc = {{"version", kReportVersion}, {"page_url", runs.empty() ? "" : runs.front().page_url}};
  json arr = json::array();
  for (const auto& r : runs) {
    arr.push_back({{"arm", to_string(r.arm)},
                   {"run_index", r.run_index},
                   {"si_ms", r.si_ms},
                   {"plt_ms", r.plt_ms},
                   {"bytes", r.bytes_downloaded}});
  }
  doc["runs"] = std::move(arr);
  return doc;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "median of no values");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

MetricDelta compute_delta(const std::vector<LoadMetrics>& runs, Metric metric, DeltaMode mode) {
  if (runs.empty()) throw Error(ErrorKind::MissingArm, "no runs");
  const std::string& page = runs.front().page_url;
  std::vector<const LoadMetrics*> orig, gen;
  for (const auto& r : runs) {
    if (r.page_url != page) throw Error(ErrorKind::InvalidArgument, "runs span several pages; use compute_deltas");
    (r.arm == Arm::original ? orig : gen).push_back(&r);
  }
  if (orig.empty()) throw Error(ErrorKind::MissingArm, page + ": no original runs");
  if (gen.empty()) throw Error(ErrorKind::MissingArm, page + ": no generated runs");
  auto value = [metric](const LoadMetrics* m) { return metric == Metric::si ? m->si_ms : m->plt_ms; };

  MetricDelta d{page, metric, 0};
  if (mode == DeltaMode::delta_of_medians) {
    std::vector<double> a, b;
    for (auto* r : orig) a.push_back(value(r));
    for (auto* r : gen) b.push_back(value(r));
    d.delta_ms = lower_median(a) - lower_median(b);
    return d;
  }
  auto by_index = [](const LoadMetrics* x, const LoadMetrics* y) { return x->run_index < y->run_index; };
  std::stable_sort(orig.begin(), orig.end(), by_index);
  std::stable_sort(gen.begin(), gen.end(), by_index);
  std::vector<double> deltas;
  for (std::size_t i = 0; i < std::min(orig.size(), gen.size()); ++i) deltas.push_back(value(orig[i]) - value(gen[i]));
  d.delta_ms = lower_median(deltas);
  return d;
}

std::vector<MetricDelta> compute_deltas(const std::vector<LoadMetrics>& runs, Metric metric, DeltaMode mode) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<LoadMetrics>> pages;
  for (const auto& r : runs) {
    auto [it, fresh] = pages.try_emplace(r.page_url);
    if (fresh) order.push_back(r.page_url);
    it->second.push_back(r);
  }
  std::vector<MetricDelta> out;
  for (const auto& page : order) out.push_back(compute_delta(pages[page], metric, mode));
  return out;
}

std::uint64_t bandwidth_savings(const PageArchive& archive, const ServeMode& mode) {
  std::uint64_t total = 0;
  for (const auto& img : archive.images) {
    if (!substitution_prompt(mode, img)) continue;
    if (const auto* e = archive.lookup(img.url)) total += e->transfer_size;
  }
  return total;
}

std::uint64_t generation_seed(std::uint64_t run_seed, std::size_t image_index) noexcept {
  return run_seed * 0x9E3779B97F4A7C15ull + image_index;
}

std::vector<std::string> above_fold_urls(const PageArchive& archive) {
  std::vector<std::string> out;
  const bool flagged = std::any_of(archive.images.begin(), archive.images.end(),
                                   [](const ImageAnnotation& i) { return i.above_fold.has_value(); });
  for (std::size_t i = 0; i < archive.images.size(); ++i) {
    const auto& img = archive.images[i];
    if (flagged ? img.above_fold.value_or(false) : i < 3) out.push_back(img.url);
  }
  return out;
}

LoadMetrics simulate_load(const PageArchive& archive, const ConnectivityProfile& profile,
                          const LatencyProfile& latency, Arm arm, const SimParams& params) {
  profile.validate();
  if (params.parallel_connections < 1 || params.generation_slots < 1) {
    throw Error(ErrorKind::InvalidArgument, "parallel_connections and generation_slots must be >= 1");
  }
  if (arm == Arm::generated && !archive.images.empty() &&
      std::none_of(archive.images.begin(), archive.images.end(), [](const ImageAnnotation& i) {
        return i.client_prompt.has_value() || i.server_prompt.has_value();
      })) {
    throw Error(ErrorKind::UnannotatedArchive, archive.page_url + " has no prompts; run annotate first");
  }

  const ArchiveEntry& root = archive.root();
  auto size_of = [&](const ArchiveEntry& e) -> std::uint64_t {
    if (e.transfer_size > 0) return e.transfer_size;
    const auto* body = archive.body(e);
    return body ? body->size() : 0;
  };
  auto network_ms = [&](const ArchiveEntry& e) { return double(profile.rtt_ms) + profile.serialization_ms(size_of(e)); };

  std::map<std::string, double, std::less<>> completion;
  const double root_done = network_ms(root);
  completion[root.url] = root_done;
  double plt = root_done;
  std::uint64_t bytes = size_of(root);

  std::vector<double> connections(std::size_t(params.parallel_connections), root_done);
  std::vector<double> slots(std::size_t(params.generation_slots), root_done);
  std::size_t generated = 0;
  for (const auto& e : archive.entries) {
    if (&e == &root) continue;
    double done = 0;
    const ImageAnnotation* img = e.is_image ? archive.find_image(e.url) : nullptr;
    if (arm == Arm::generated && img && substitution_prompt(params.serve_mode, *img)) {
      auto slot = std::min_element(slots.begin(), slots.end());
      done = *slot + double(sample_latency(latency, generation_seed(params.seed, generated++)));
      *slot = done;
    } else {
      auto conn = std::min_element(connections.begin(), connections.end());
      done = *conn + network_ms(e);
      *conn = done;
      bytes += size_of(e);
    }
    completion.emplace(e.url, done);
    plt = std::max(plt, done);
  }

  double weighted = 0, weight = 0, plain = 0;
  std::size_t count = 0;
  auto visible = [&](const ArchiveEntry& e) {
    auto it = completion.find(e.url);
    if (it == completion.end()) return;
    const double w = double(size_of(e));
    weighted += w * it->second;
    weight += w;
    plain += it->second;
    ++count;
  };
  visible(root);
  for (const auto& url : above_fold_urls(archive)) {
    if (const auto* e = archive.lookup(url)) visible(*e);
  }

  LoadMetrics m;
  m.page_url = archive.page_url;
  m.arm = arm;
  m.run_index = 0;
  m.si_ms = weight > 0 ? weighted / weight : plain / double(count);
  m.plt_ms = plt;
  m.bytes_downloaded = bytes;
  return m;
}

std::vector<LoadMetrics> simulate_runs(const PageArchive& archive, const ConnectivityProfile& profile,
                                       const LatencyProfile& latency, int runs, const SimParams& params) {
  std::vector<LoadMetrics> out;
  for (Arm arm : {Arm::original, Arm::generated}) {
    for (int i = 0; i < runs; ++i) {
      SimParams p = params;
      p.seed = params.seed + std::uint64_t(i);
      auto m = simulate_load(archive, profile, latency, arm, p);
      m.run_index = i;
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values) {
  std::vector<std::pair<double, double>> out;
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  const double n = double(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.emplace_back(values[i], double(i + 1) / n);
  }
  return out;
}

std::string deltas_csv(const std::vector<MetricDelta>& deltas) {
  std::string out = "page_url,metric,delta_ms\n";
  char buf[64];
  for (const auto& d : deltas) {
    std::snprintf(buf, sizeof buf, ",%.3f\n", d.delta_ms);
    out += d.page_url + "," + std::string(to_string(d.metric)) + buf;
  }
  return out;
}

std::string cdf_csv(const std::vector<std::pair<double, double>>& cdf, std::string_view value_header) {
  std::string out = std::string(value_header) + ",cumulative_fraction\n";
  char buf[96];
  for (const auto& [v, f] : cdf) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6f\n", v, f);
    out += buf;
  }
  return out;
}

}  // namespace webforge
