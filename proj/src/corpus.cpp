/*
 * Copyright 2026 The GPSL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "gpsl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gpsl/error.hpp"
#include "random.hpp"

namespace gpsl {

Alphabet::Alphabet(std::vector<std::string> names) {
    for (auto& n : names) {
        if (lookup(n) >= 0) throw FormatError("duplicate alphabet entry '" + n + "'");
        insert(n);
    }
}

int Alphabet::lookup(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    return it == ids_.end() ? -1 : it->second;
}

int Alphabet::insert(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
}

std::size_t RawCorpus::num_tokens() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.tokens.size();
    return n;
}

std::size_t Corpus::num_tokens() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
}

std::size_t Corpus::num_observed() const {
    std::size_t n = 0;
    for (const auto& s : sentences)
        for (const auto& t : s.tokens) n += t.observed() ? 1 : 0;
    return n;
}

RawCorpus parse_conll(std::istream& in, const std::string& source) {
    RawCorpus raw;
    RawSentence current;
    std::string line;
    std::size_t line_no = 0;

    auto flush = [&] {
        if (!current.tokens.empty()) raw.sentences.push_back(std::move(current));
        current = RawSentence{};
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream fields(line);
        std::vector<std::string> columns;
        for (std::string f; fields >> f;) columns.push_back(std::move(f));
        if (columns.empty()) {
            flush();
            continue;
        }
        const int width = static_cast<int>(columns.size());
        if (raw.columns == 0) {
            raw.columns = width;
        } else if (width != raw.columns) {
            throw FormatError(source + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(raw.columns) + " columns, found " +
                              std::to_string(width));
        }
        current.tokens.push_back(std::move(columns));
    }
    flush();
    if (raw.sentences.empty()) throw EmptyCorpusError(source + ": no sentences");
    return raw;
}

RawCorpus read_conll(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open data file '" + path.string() + "'");
    return parse_conll(in, path.string());
}

void write_conll(std::ostream& out, const RawCorpus& raw,
                 const std::vector<std::vector<std::string>>& extra) {
    if (!extra.empty() && extra.size() != raw.num_tokens())
        throw ArgumentError("write_conll: appended columns do not match token count");
    std::size_t t = 0;
    for (const auto& sentence : raw.sentences) {
        for (const auto& columns : sentence.tokens) {
            for (std::size_t c = 0; c < columns.size(); ++c) {
                if (c > 0) out << ' ';
                out << columns[c];
            }
            if (!extra.empty()) {
                for (const auto& e : extra[t]) out << ' ' << e;
            }
            out << '\n';
            ++t;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Templates

void TemplateSet::add(const std::string& line) {
    if (line.empty() || line.front() != 'U')
        throw TemplateError("only unigram templates are supported: '" + line + "'");

    std::vector<Piece> pieces;
    std::string literal;
    std::size_t i = 0;
    while (i < line.size()) {
        if (line.compare(i, 3, "%x[") == 0) {
            const std::size_t close = line.find(']', i);
            if (close == std::string::npos) throw TemplateError("unterminated macro in '" + line + "'");
            const std::string body = line.substr(i + 3, close - i - 3);
            const std::size_t comma = body.find(',');
            if (comma == std::string::npos) throw TemplateError("malformed macro in '" + line + "'");
            Piece macro;
            macro.is_macro = true;
            try {
                std::size_t used = 0;
                macro.row = std::stoi(body.substr(0, comma), &used);
                if (used != comma) throw std::invalid_argument("row");
                const std::string col = body.substr(comma + 1);
                macro.column = std::stoi(col, &used);
                if (used != col.size()) throw std::invalid_argument("col");
            } catch (const std::logic_error&) {
                throw TemplateError("malformed macro in '" + line + "'");
            }
            if (macro.column < 0) throw TemplateError("negative column in '" + line + "'");
            if (!literal.empty()) pieces.push_back(Piece{std::move(literal)});
            literal.clear();
            max_column_ = std::max(max_column_, macro.column);
            pieces.push_back(macro);
            i = close + 1;
        } else {
            literal.push_back(line[i++]);
        }
    }
    if (!literal.empty()) pieces.push_back(Piece{std::move(literal)});
    templates_.push_back(line);
    compiled_.push_back(std::move(pieces));
}

TemplateSet TemplateSet::from_lines(const std::vector<std::string>& lines) {
    TemplateSet set;
    for (auto line : lines) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto last = line.find_last_not_of(" \t");
        set.add(line.substr(first, last - first + 1));
    }
    return set;
}

TemplateSet TemplateSet::parse(std::istream& in) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return from_lines(lines);
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open template file '" + path.string() + "'");
    return parse(in);
}

std::string TemplateSet::expand(std::size_t index, const RawSentence& sentence,
                                std::size_t position) const {
    const auto length = static_cast<long>(sentence.tokens.size());
    std::string out;
    for (const auto& piece : compiled_.at(index)) {
        if (!piece.is_macro) {
            out += piece.literal;
            continue;
        }
        const long row = static_cast<long>(position) + piece.row;
        if (row < 0) {
            out += "_B-" + std::to_string(-row) + "_";
        } else if (row >= length) {
            out += "_B+" + std::to_string(row - length + 1) + "_";
        } else {
            out += sentence.tokens[static_cast<std::size_t>(row)].at(static_cast<std::size_t>(piece.column));
        }
    }
    return out;
}

Corpus apply_templates(const RawCorpus& raw, const TemplateSet& templates, Alphabets& alphabets,
                       bool freeze) {
    // The last column holds the label, so macros may only see the ones before it.
    const int input_columns = raw.columns - 1;
    if (templates.max_column() >= input_columns) {
        throw TemplateError("template references column " + std::to_string(templates.max_column()) +
                            " but the data has " + std::to_string(input_columns) + " input columns");
    }

    Corpus corpus;
    corpus.sentences.reserve(raw.sentences.size());
    for (const auto& rs : raw.sentences) {
        Sentence sentence;
        sentence.tokens.reserve(rs.tokens.size());
        for (std::size_t pos = 0; pos < rs.tokens.size(); ++pos) {
            Token token;
            token.columns = rs.tokens[pos];
            const std::string& label = token.columns.back();
            if (label == kMissingLabelString) {
                token.label = kMissingLabel;
            } else if (freeze) {
                token.label = alphabets.labels.lookup(label);
                if (token.label < 0) throw FormatError("label '" + label + "' is not in the model alphabet");
            } else {
                token.label = alphabets.labels.insert(label);
            }
            for (std::size_t k = 0; k < templates.size(); ++k) {
                const std::string feature = templates.expand(k, rs, pos);
                const int id = freeze ? alphabets.features.lookup(feature) : alphabets.features.insert(feature);
                if (id >= 0) token.features.push_back(id);
            }
            std::sort(token.features.begin(), token.features.end());
            token.features.erase(std::unique(token.features.begin(), token.features.end()),
                                 token.features.end());
            sentence.tokens.push_back(std::move(token));
        }
        corpus.sentences.push_back(std::move(sentence));
    }
    corpus.alphabets = alphabets;
    return corpus;
}

Corpus expand_frozen(const RawCorpus& raw, const TemplateSet& templates, const Alphabets& alphabets) {
    Alphabets copy = alphabets;
    return apply_templates(raw, templates, copy, true);
}

Corpus mask_labels(const Corpus& corpus, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw ArgumentError("mask fraction must lie in [0, 1]");

    std::vector<Token*> tokens;
    Corpus masked = corpus;
    for (auto& s : masked.sentences)
        for (auto& t : s.tokens) {
            if (!t.observed()) throw ArgumentError("mask_labels: corpus already has missing labels");
            tokens.push_back(&t);
        }

    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(tokens.size())));
    detail::Rng rng(seed);
    // Partial Fisher-Yates: the first `count` slots become a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.below(tokens.size() - i);
        std::swap(tokens[i], tokens[j]);
        tokens[i]->label = kMissingLabel;
        tokens[i]->columns.back() = std::string(kMissingLabelString);
    }
    return masked;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

// Probability that a token's signal word comes from its label's own block.
constexpr double kEmissionFidelity = 0.75;

} // namespace

RawCorpus synth_generate_raw(int num_labels, int length, int count, double transition_strength,
                             int emission_dim, std::uint64_t seed) {
    if (num_labels < 2) throw ArgumentError("synth: need at least 2 labels");
    if (length < 1 || count < 1) throw ArgumentError("synth: length and count must be positive");
    if (!(transition_strength >= 0.0)) throw ArgumentError("synth: transition strength must be >= 0");
    if (emission_dim < num_labels) throw ArgumentError("synth: emission dimension must be >= label count");

    const auto J = static_cast<std::uint64_t>(num_labels);
    const double heavy = std::exp(transition_strength);
    const double p_successor = heavy / (heavy + static_cast<double>(J - 1));

    // Label y owns the words w with w % J == y.
    std::vector<std::vector<int>> owned(J);
    for (int w = 0; w < emission_dim; ++w) owned[static_cast<std::size_t>(w) % J].push_back(w);

    detail::Rng rng(seed);
    RawCorpus raw;
    raw.columns = 3;
    raw.sentences.resize(static_cast<std::size_t>(count));
    for (auto& sentence : raw.sentences) {
        std::uint64_t label = rng.below(J);
        for (int l = 0; l < length; ++l) {
            if (l > 0) {
                const std::uint64_t successor = (label + 1) % J;
                if (rng.uniform() < p_successor) {
                    label = successor;
                } else {
                    // uniform over the J-1 non-successor labels
                    std::uint64_t other = rng.below(J - 1);
                    if (other >= successor) ++other;
                    label = other;
                }
            }
            int word;
            if (rng.uniform() < kEmissionFidelity) {
                const auto& block = owned[label];
                word = block[rng.below(block.size())];
            } else {
                word = static_cast<int>(rng.below(static_cast<std::uint64_t>(emission_dim)));
            }
            const int noise = static_cast<int>(rng.below(static_cast<std::uint64_t>(emission_dim)));
            sentence.tokens.push_back({"w" + std::to_string(word), "n" + std::to_string(noise),
                                       "L" + std::to_string(label)});
        }
    }
    return raw;
}

TemplateSet synth_templates() { return TemplateSet::from_lines({"U00:%x[0,0]", "U01:%x[0,1]"}); }

Corpus synth_generate(int num_labels, int length, int count, double transition_strength,
                      int emission_dim, std::uint64_t seed) {
    const RawCorpus raw =
        synth_generate_raw(num_labels, length, count, transition_strength, emission_dim, seed);
    Alphabets alphabets;
    for (int j = 0; j < num_labels; ++j) alphabets.labels.insert("L" + std::to_string(j));
    return apply_templates(raw, synth_templates(), alphabets, false);
}

} // namespace gpsl
