#include "lingmerge/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "lingmerge/error.hpp"

namespace lingmerge::metrics {

namespace {

// Decodes one UTF-8 code point at s[i]; advances i. Invalid bytes decode as
// themselves.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto c0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) { return static_cast<unsigned char>(s[i + k]) & 0x3fu; };
    auto has = [&](std::size_t n) {
        if (i + n > s.size()) return false;
        for (std::size_t k = 1; k < n; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xc0u) != 0x80u) return false;
        }
        return true;
    };
    char32_t cp = c0;
    std::size_t len = 1;
    if (c0 >= 0xf0 && has(4)) {
        cp = ((c0 & 0x07u) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
        len = 4;
    } else if (c0 >= 0xe0 && has(3)) {
        cp = ((c0 & 0x0fu) << 12) | (cont(1) << 6) | cont(2);
        len = 3;
    } else if (c0 >= 0xc0 && has(2)) {
        cp = ((c0 & 0x1fu) << 6) | cont(1);
        len = 2;
    }
    i += len;
    return cp;
}

bool is_space(char32_t c) {
    return c == ' ' || (c >= 0x09 && c <= 0x0d) || c == 0x85 || c == 0xa0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200a) || c == 0x2028 || c == 0x2029 || c == 0x202f || c == 0x205f ||
           c == 0x3000;
}

bool is_punct(char32_t c) {
    if (c < 0x80) return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) ||
                         (c >= 0x7b && c <= 0x7e);
    return (c >= 0xa1 && c <= 0xbf && c != 0xaa && c != 0xb2 && c != 0xb3 && c != 0xb5 && c != 0xb9 && c != 0xba &&
            c != 0xbc && c != 0xbd && c != 0xbe) ||
           (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205e) || (c >= 0x3001 && c <= 0x3003) ||
           (c >= 0x3008 && c <= 0x3011) || (c >= 0x3014 && c <= 0x301f) || (c >= 0xff01 && c <= 0xff0f) ||
           (c >= 0xff1a && c <= 0xff20) || (c >= 0xff3b && c <= 0xff40) || (c >= 0xff5b && c <= 0xff65);
}

char lower_ascii(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

// Splits on whitespace; returns (token, punctuation-only) pairs, lowercased.
std::vector<std::pair<std::string, bool>> split(std::string_view text) {
    std::vector<std::pair<std::string, bool>> out;
    std::string cur;
    bool only_punct = true;
    for (std::size_t i = 0; i < text.size();) {
        const std::size_t start = i;
        const char32_t cp = next_code_point(text, i);
        if (is_space(cp)) {
            if (!cur.empty()) out.emplace_back(std::move(cur), only_punct);
            cur.clear();
            only_punct = true;
            continue;
        }
        only_punct = only_punct && is_punct(cp);
        for (std::size_t k = start; k < i; ++k) cur.push_back(lower_ascii(text[k]));
    }
    if (!cur.empty()) out.emplace_back(std::move(cur), only_punct);
    return out;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, int n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= toks.size(); ++i) {
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + un))];
    }
    return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

Prf ratio_prf(double overlap, double cand_total, double ref_total) {
    Prf r;
    r.precision = cand_total > 0 ? overlap / cand_total : 0.0;
    r.recall = ref_total > 0 ? overlap / ref_total : 0.0;
    r.f1 = harmonic_mean(r.precision, r.recall);
    return r;
}

void require_reference(const TextPair& pair) {
    if (pair.reference.empty()) throw Error(ErrorCode::kParameter, "reference text is empty after tokenization");
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    for (auto& [tok, punct] : split(text)) {
        if (!punct) out.push_back(std::move(tok));
    }
    return out;
}

std::string normalize(std::string_view text) {
    std::string out;
    for (const auto& [tok, punct] : split(text)) {
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

TextPair make_text_pair(std::string_view reference, std::string_view candidate) {
    return {tokenize(reference), tokenize(candidate)};
}

double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

double accuracy(std::span<const LabeledPair> preds) {
    if (preds.empty()) throw Error(ErrorCode::kParameter, "accuracy of an empty prediction set");
    const auto correct = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.gold == p.pred; });
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

Prf macro_prf(std::span<const LabeledPair> preds) {
    if (preds.empty()) throw Error(ErrorCode::kParameter, "macro P/R/F1 of an empty prediction set");
    std::set<std::string> labels;
    for (const auto& p : preds) {
        labels.insert(p.gold);
        labels.insert(p.pred);
    }
    Prf macro;
    for (const auto& label : labels) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (const auto& p : preds) {
            const bool g = p.gold == label;
            const bool q = p.pred == label;
            tp += g && q;
            fp += !g && q;
            fn += g && !q;
        }
        const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        macro.precision += prec;
        macro.recall += rec;
        macro.f1 += harmonic_mean(prec, rec);
    }
    const auto n = static_cast<double>(labels.size());
    macro.precision /= n;
    macro.recall /= n;
    macro.f1 /= n;
    return macro;
}

Prf rouge_n(const TextPair& pair, int n) {
    if (n < 1) throw Error(ErrorCode::kParameter, "ROUGE-N needs n >= 1");
    require_reference(pair);
    const auto ref = ngram_counts(pair.reference, n);
    const auto cand = ngram_counts(pair.candidate, n);
    std::size_t overlap = 0, ref_total = 0, cand_total = 0;
    for (const auto& [g, c] : ref) ref_total += c;
    for (const auto& [g, c] : cand) {
        cand_total += c;
        if (auto it = ref.find(g); it != ref.end()) overlap += std::min(c, it->second);
    }
    return ratio_prf(static_cast<double>(overlap), static_cast<double>(cand_total), static_cast<double>(ref_total));
}

Prf rouge_l(const TextPair& pair) {
    require_reference(pair);
    const auto l = lcs_length(pair.reference, pair.candidate);
    return ratio_prf(static_cast<double>(l), static_cast<double>(pair.candidate.size()),
                     static_cast<double>(pair.reference.size()));
}

double hallucination_rate(std::span<const ExtractionRecord> records) {
    std::size_t total = 0;
    std::size_t missing = 0;
    for (const auto& rec : records) {
        if (rec.source.empty()) throw Error(ErrorCode::kParameter, "extraction record with empty source");
        const std::string src = normalize(rec.source);
        for (const auto& ex : rec.examples) {
            ++total;
            if (src.find(normalize(ex)) == std::string::npos) ++missing;
        }
    }
    if (total == 0) throw Error(ErrorCode::kUndefinedRate, "no generated examples to score");
    return static_cast<double>(missing) / static_cast<double>(total);
}

}  // namespace lingmerge::metrics
