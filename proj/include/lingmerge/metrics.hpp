#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lingmerge::metrics {

struct LabeledPair {
    std::string gold;
    std::string pred;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct TextPair {
    std::vector<std::string> reference;
    std::vector<std::string> candidate;
};

struct ExtractionRecord {
    std::string source;
    std::vector<std::string> examples;
};

// Lowercases ASCII, splits on ASCII and common Unicode whitespace, and drops
// tokens made only of punctuation. No stemming.
std::vector<std::string> tokenize(std::string_view text);

// Lowercase, collapse whitespace runs to one space, trim.
std::string normalize(std::string_view text);

TextPair make_text_pair(std::string_view reference, std::string_view candidate);

double harmonic_mean(double p, double r);

double accuracy(std::span<const LabeledPair> preds);
// Unweighted mean over the union of gold and predicted labels.
Prf macro_prf(std::span<const LabeledPair> preds);

Prf rouge_n(const TextPair& pair, int n);
Prf rouge_l(const TextPair& pair);

// Fraction of generated examples, pooled over all records, whose normalized
// text is not a substring of the normalized source.
double hallucination_rate(std::span<const ExtractionRecord> records);

}  // namespace lingmerge::metrics
