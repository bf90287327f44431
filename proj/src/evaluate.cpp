#include "webforge/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include <json.hpp>

#include "http_endpoint.hpp"
#include "webforge/digest.hpp"
#include "webforge/error.hpp"

namespace webforge {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::DimensionMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw Error(ErrorKind::ZeroVector, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Embedding StubEmbeddingProvider::embed(std::string_view text) {
  const auto digest = sha256(text);
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) seed |= std::uint64_t(digest[i]) << (8 * i);
  std::mt19937_64 engine(seed);
  Embedding v(kEmbeddingDim);
  double norm = 0;
  for (auto& x : v) {
    x = double(engine() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string endpoint, HttpBackendOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
  detail::split_endpoint(endpoint_, ErrorKind::InvalidArgument);
}

Embedding HttpEmbeddingProvider::embed(std::string_view text) {
  const auto ep = detail::split_endpoint(endpoint_, ErrorKind::ProviderUnavailable);
  auto cli = detail::make_client(ep, options_.timeout);
  const nlohmann::json body = {{"text", text}};
  auto res = cli.Post(ep.path, body.dump(), "application/json");
  if (!res) throw Error(ErrorKind::ProviderUnavailable, endpoint_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorKind::ProviderUnavailable, endpoint_ + " returned " + std::to_string(res->status));
  }
  const auto doc = nlohmann::json::parse(res->body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("embedding") || !doc["embedding"].is_array()) {
    throw Error(ErrorKind::ProviderUnavailable, endpoint_ + ": malformed embedding response");
  }
  Embedding out;
  for (const auto& x : doc["embedding"]) {
    if (!x.is_number()) throw Error(ErrorKind::BadDimension, endpoint_ + ": non-numeric embedding entry");
    out.push_back(x.get<double>());
  }
  return out;
}

Embedding embed(std::string_view text, EmbeddingProvider& provider, std::size_t dim) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw Error(ErrorKind::InvalidArgument, "cannot embed empty text");
  }
  auto v = provider.embed(text);
  if (v.size() != dim) {
    throw Error(ErrorKind::BadDimension, "expected " + std::to_string(dim) + " values, got " + std::to_string(v.size()));
  }
  if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
    throw Error(ErrorKind::BadDimension, "embedding has non-finite values");
  }
  return v;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "percentile of no values");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (values[hi] - values[lo]) * (pos - double(lo));
}

DistributionSummary distribution_summary(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorKind::EmptyInput, "no values to summarize");
  DistributionSummary s;
  s.n = values.size();
  s.median = percentile(values, 0.5);
  s.p25 = percentile(values, 0.25);
  s.p75 = percentile(values, 0.75);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
  return s;
}

DistributionSummary agreement_stats(const std::vector<std::pair<std::string, std::string>>& pairs,
                                    EmbeddingProvider& provider) {
  std::vector<double> sims;
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    try {
      const auto a = embed(pairs[i].first, provider);
      const auto b = embed(pairs[i].second, provider);
      sims.push_back(cosine_similarity(a, b));
    } catch (const Error& e) {
      warnings.push_back("pair " + std::to_string(i) + " dropped: " + e.what());
    }
  }
  if (sims.empty()) throw Error(ErrorKind::EmptyInput, "no prompt pairs could be embedded");
  auto s = distribution_summary(sims);
  s.warnings = std::move(warnings);
  return s;
}

std::string_view to_string(ResponseKind kind) noexcept {
  switch (kind) {
    case ResponseKind::quality: return "quality";
    case ResponseKind::relevance: return "relevance";
    case ResponseKind::cannot_judge: return "cannot_judge";
  }
  return "quality";
}

std::optional<ResponseKind> parse_response_kind(std::string_view name) noexcept {
  for (auto k : {ResponseKind::quality, ResponseKind::relevance, ResponseKind::cannot_judge}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

namespace {

double midpoint_median(const std::vector<double>& sorted, std::size_t begin, std::size_t end) {
  const std::size_t n = end - begin;
  const std::size_t mid = begin + n / 2;
  return n % 2 == 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2.0;
}

}  // namespace

ScoreSummary summarize_values(std::string item_id, std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::NoValidScores, item_id + ": no valid scores");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  ScoreSummary s;
  s.item_id = std::move(item_id);
  s.n = n;
  s.median = values[(n - 1) / 2];
  s.min = values.front();
  s.max = values.back();
  // Tukey hinges: halves include the middle element when n is odd.
  const std::size_t half = (n + 1) / 2;
  s.q1 = midpoint_median(values, 0, half);
  s.q3 = midpoint_median(values, n - half, n);
  return s;
}

ScoreSummary summarize_scores(std::string item_id, const std::vector<ScoreRecord>& records) {
  std::vector<double> values;
  for (const auto& r : records) {
    if (r.response.kind != ResponseKind::cannot_judge) values.push_back(r.response.value);
  }
  return summarize_values(std::move(item_id), std::move(values));
}

std::vector<std::pair<double, double>> score_cdf(const std::vector<ScoreSummary>& summaries) {
  std::vector<double> medians;
  for (const auto& s : summaries) medians.push_back(s.median);
  std::sort(medians.begin(), medians.end());
  std::vector<std::pair<double, double>> out;
  const double n = double(medians.size());
  for (std::size_t i = 0; i < medians.size(); ++i) {
    if (i + 1 < medians.size() && medians[i + 1] == medians[i]) continue;
    out.emplace_back(medians[i], i + 1 == medians.size() ? 1.0 : double(i + 1) / n);
  }
  return out;
}

std::map<ImageTag, ScoreSummary> tag_boxplots(const std::vector<TaggedSummary>& items) {
  std::map<ImageTag, std::vector<double>> groups;
  for (const auto& item : items) {
    std::vector<ImageTag> tags = item.tags;
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    for (auto tag : tags) groups[tag].push_back(item.summary.median);
  }
  std::map<ImageTag, ScoreSummary> out;
  for (auto& [tag, medians] : groups) out.emplace(tag, summarize_values(std::string(to_string(tag)), std::move(medians)));
  return out;
}

namespace {

std::string summary_row(const ScoreSummary& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%g,%g,%g,%g,%g\n", s.n, s.min, s.q1, s.median, s.q3, s.max);
  return buf;
}

std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string summaries_csv(const std::vector<ScoreSummary>& summaries) {
  std::string out = "item_id,n,min,q1,median,q3,max\n";
  for (const auto& s : summaries) out += csv_field(s.item_id) + "," + summary_row(s);
  return out;
}

std::string boxplots_csv(const std::map<ImageTag, ScoreSummary>& boxplots) {
  std::string out = "tag,n,min,q1,median,q3,max\n";
  for (const auto& [tag, s] : boxplots) out += std::string(to_string(tag)) + "," + summary_row(s);
  return out;
}

}  // namespace webforge
