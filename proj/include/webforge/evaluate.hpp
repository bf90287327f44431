#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "webforge/archive.hpp"
#include "webforge/genclient.hpp"

namespace webforge {

using Embedding = std::vector<double>;
inline constexpr std::size_t kEmbeddingDim = 768;

/// dot(a, b) / (|a| |b|). Throws Error{DimensionMismatch} or Error{ZeroVector}.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Embedding embed(std::string_view text) = 0;
};

/// Unit vector drawn from a generator seeded by the SHA-256 of the text.
class StubEmbeddingProvider final : public EmbeddingProvider {
 public:
  Embedding embed(std::string_view text) override;
};

/// POST {"text": ...}; expects {"embedding": [768 numbers]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::string endpoint, HttpBackendOptions options = {});
  Embedding embed(std::string_view text) override;

 private:
  std::string endpoint_;
  HttpBackendOptions options_;
};

/// Checks the provider's output: nonempty text (InvalidArgument), exactly
/// `dim` finite values (BadDimension).
Embedding embed(std::string_view text, EmbeddingProvider& provider, std::size_t dim = kEmbeddingDim);

struct DistributionSummary {
  std::size_t n = 0;
  double median = 0;  // interpolated
  double mean = 0;
  double p25 = 0;
  double p75 = 0;
  std::vector<std::string> warnings;
};

/// Linear-interpolation percentile (q in [0, 1]) of unsorted values.
double percentile(std::vector<double> values, double q);
/// Throws Error{EmptyInput}.
DistributionSummary distribution_summary(const std::vector<double>& values);

/// Cosine similarity of each (client_prompt, server_prompt) pair. Pairs whose
/// embedding fails are dropped with a warning; Error{EmptyInput} if none remain.
DistributionSummary agreement_stats(const std::vector<std::pair<std::string, std::string>>& pairs,
                                    EmbeddingProvider& provider);

enum class ResponseKind { quality, relevance, cannot_judge };
std::string_view to_string(ResponseKind kind) noexcept;
std::optional<ResponseKind> parse_response_kind(std::string_view name) noexcept;

struct Response {
  ResponseKind kind = ResponseKind::quality;
  int value = 0;  // 1..5; 0 for cannot_judge

  bool operator==(const Response&) const = default;
};

struct ScoreRecord {
  std::string task_id;
  std::string participant_id;
  Response response;
  std::chrono::sys_seconds submitted_at{};

  bool operator==(const ScoreRecord&) const = default;
};

struct ScoreSummary {
  std::string item_id;
  std::size_t n = 0;
  double median = 0;  // lower median
  double q1 = 0;      // Tukey hinges
  double q3 = 0;
  double min = 0;
  double max = 0;

  bool operator==(const ScoreSummary&) const = default;
};

/// Lower median and Tukey hinges over arbitrary values. Throws Error{NoValidScores}.
ScoreSummary summarize_values(std::string item_id, std::vector<double> values);
/// Drops cannot_judge responses first.
ScoreSummary summarize_scores(std::string item_id, const std::vector<ScoreRecord>& records);

/// (median value, fraction of items with median <= value), ascending.
std::vector<std::pair<double, double>> score_cdf(const std::vector<ScoreSummary>& summaries);

struct TaggedSummary {
  ScoreSummary summary;
  std::vector<ImageTag> tags;
};

/// Summary of item medians per tag; tags without items are absent.
std::map<ImageTag, ScoreSummary> tag_boxplots(const std::vector<TaggedSummary>& items);

std::string summaries_csv(const std::vector<ScoreSummary>& summaries);
std::string boxplots_csv(const std::map<ImageTag, ScoreSummary>& boxplots);

}  // namespace webforge
