#include "cfrag/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>

#include <json.hpp>

#include "cfrag/embedding.hpp"
#include "cfrag/errors.hpp"

namespace cfrag::metrics {

namespace {

RougeScore make_score(double overlap, double cand_len, double ref_len) {
  RougeScore s;
  if (cand_len == 0.0 && ref_len == 0.0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  if (cand_len == 0.0 || ref_len == 0.0) return s;
  s.precision = overlap / cand_len;
  s.recall = overlap / ref_len;
  s.f1 = (s.precision + s.recall > 0.0)
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

std::string normalize_label(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    // Allow trailing whitespace only.
    for (std::size_t i = pos; i < s.size(); ++i) {
      if (!std::isspace(static_cast<unsigned char>(s[i]))) return std::nullopt;
    }
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

RougeScore rouge1(const std::string& candidate, const std::string& reference) {
  const auto cand = embedding::tokenize(candidate);
  const auto ref = embedding::tokenize(reference);
  std::map<std::string, int> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  double overlap = 0.0;
  for (const auto& t : cand) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      overlap += 1.0;
    }
  }
  return make_score(overlap, static_cast<double>(cand.size()), static_cast<double>(ref.size()));
}

RougeScore rougeL(const std::string& candidate, const std::string& reference) {
  const auto cand = embedding::tokenize(candidate);
  const auto ref = embedding::tokenize(reference);
  const std::size_t n = cand.size(), m = ref.size();
  if (n == 0 || m == 0) return make_score(0.0, static_cast<double>(n), static_cast<double>(m));
  // Two-row LCS DP.
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = (cand[i - 1] == ref[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return make_score(static_cast<double>(prev[m]), static_cast<double>(n),
                    static_cast<double>(m));
}

ClassificationResult classification_metrics(const std::vector<std::string>& preds,
                                            const std::vector<std::string>& targets,
                                            const std::vector<std::string>& labels) {
  if (preds.size() != targets.size() || preds.empty())
    throw ContractError("classification_metrics: length mismatch or empty input");

  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (normalize_label(preds[i]) == normalize_label(targets[i])) ++correct;
  }

  double f1_sum = 0.0;
  for (const auto& raw_label : labels) {
    const std::string label = normalize_label(raw_label);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool pred_is = normalize_label(preds[i]) == label;
      const bool targ_is = normalize_label(targets[i]) == label;
      if (pred_is && targ_is) ++tp;
      else if (pred_is) ++fp;
      else if (targ_is) ++fn;
    }
    const double p = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double r = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    f1_sum += (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
  }

  ClassificationResult out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  out.macro_f1 = labels.empty() ? 0.0 : f1_sum / static_cast<double>(labels.size());
  return out;
}

RegressionResult regression_metrics(const std::vector<std::string>& preds,
                                    const std::vector<double>& targets) {
  if (preds.size() != targets.size() || preds.empty())
    throw ContractError("regression_metrics: length mismatch or empty input");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = parse_number(preds[i]).value_or(3.0);
    const double e = p - targets[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  RegressionResult out;
  out.mae = abs_sum / static_cast<double>(preds.size());
  out.rmse = std::sqrt(sq_sum / static_cast<double>(preds.size()));
  return out;
}

std::string extract_json_field(const std::string& text, const std::string& field) {
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    // Find the matching close brace, respecting strings.
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (c == '\\') ++i;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        --depth;
        if (depth == 0) {
          try {
            auto j = nlohmann::json::parse(text.substr(start, i - start + 1));
            if (j.is_object() && j.contains(field) && j[field].is_string())
              return j[field].get<std::string>();
            if (j.is_object() && j.contains(field)) return j[field].dump();
          } catch (...) {
            // Not valid JSON; keep scanning.
          }
          break;
        }
      }
    }
  }
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return text.substr(b, e - b);
}

}  // namespace cfrag::metrics
