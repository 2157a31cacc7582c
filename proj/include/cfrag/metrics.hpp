#pragma once

#include <string>
#include <vector>

namespace cfrag::metrics {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Unigram overlap with clipping. Tokenization: lowercase, split on
// non-alphanumeric runs. Both empty -> f1 = 1; exactly one empty -> 0.
RougeScore rouge1(const std::string& candidate, const std::string& reference);

// Longest common subsequence variant under the same tokenization.
RougeScore rougeL(const std::string& candidate, const std::string& reference);

// Accuracy is exact match after trim+lowercase; F1 is macro-averaged over
// the given label set. Predictions outside the label set are wrong everywhere.
struct ClassificationResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};
ClassificationResult classification_metrics(const std::vector<std::string>& preds,
                                            const std::vector<std::string>& targets,
                                            const std::vector<std::string>& labels);

// MAE and RMSE over parsed numeric predictions; an unparseable prediction is
// imputed as 3 (the 1-5 rating scale midpoint).
struct RegressionResult {
  double mae = 0.0;
  double rmse = 0.0;
};
RegressionResult regression_metrics(const std::vector<std::string>& preds,
                                    const std::vector<double>& targets);

// Returns the named field of the first well-formed JSON object embedded in
// text, or the trimmed raw text when no such object exists.
std::string extract_json_field(const std::string& text, const std::string& field);

}  // namespace cfrag::metrics
