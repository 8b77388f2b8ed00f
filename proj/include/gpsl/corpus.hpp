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

#ifndef GPSL_CORPUS_HPP
#define GPSL_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gpsl {

/// Label id of a token whose label is unknown ("?" in the label column).
inline constexpr int kMissingLabel = -1;
inline constexpr std::string_view kMissingLabelString = "?";

/// Sparse binary feature vector: strictly increasing feature ids.
using FeatureIds = std::vector<int>;

struct Token {
    std::vector<std::string> columns;
    FeatureIds features;
    int label = kMissingLabel;

    bool observed() const { return label != kMissingLabel; }
};

struct Sentence {
    std::vector<Token> tokens;

    std::size_t size() const { return tokens.size(); }
};

/// Bijection between strings and dense ids, in insertion order.
class Alphabet {
public:
    Alphabet() = default;
    explicit Alphabet(std::vector<std::string> names);

    /// Returns -1 when absent.
    int lookup(std::string_view name) const;
    int insert(const std::string& name);
    const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }

    bool operator==(const Alphabet& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> ids_;
};

struct Alphabets {
    Alphabet labels;
    Alphabet features;
};

/// One sentence of whitespace-separated columns; the last column is the label.
struct RawSentence {
    std::vector<std::vector<std::string>> tokens;
};

struct RawCorpus {
    std::vector<RawSentence> sentences;
    int columns = 0;

    std::size_t num_tokens() const;
};

struct Corpus {
    std::vector<Sentence> sentences;
    Alphabets alphabets;

    int num_features() const { return alphabets.features.size(); }
    int num_labels() const { return alphabets.labels.size(); }
    std::size_t num_tokens() const;
    std::size_t num_observed() const;
};

RawCorpus parse_conll(std::istream& in, const std::string& source = "<stream>");
RawCorpus read_conll(const std::filesystem::path& path);

/// Writes tokens back as CoNLL; `extra` (if non-empty) holds one set of
/// appended columns per token, in corpus order.
void write_conll(std::ostream& out, const RawCorpus& raw,
                 const std::vector<std::vector<std::string>>& extra = {});

/// CRF++ unigram templates. Each line "Uxx:...%x[row,col]..." expands to one
/// binary feature per token.
class TemplateSet {
public:
    TemplateSet() = default;
    static TemplateSet from_lines(const std::vector<std::string>& lines);
    static TemplateSet parse(std::istream& in);
    static TemplateSet load(const std::filesystem::path& path);

    const std::vector<std::string>& templates() const { return templates_; }
    std::size_t size() const { return templates_.size(); }
    /// Largest column index referenced by any macro, -1 if none.
    int max_column() const { return max_column_; }

    std::string expand(std::size_t index, const RawSentence& sentence, std::size_t position) const;

private:
    struct Piece {
        std::string literal;
        bool is_macro = false;
        int row = 0;
        int column = 0;
    };

    void add(const std::string& line);

    std::vector<std::string> templates_;
    std::vector<std::vector<Piece>> compiled_;
    int max_column_ = -1;
};

/// Expands templates into feature ids. With `freeze` off both alphabets grow;
/// with it on, unknown features are dropped and unknown labels are an error.
Corpus apply_templates(const RawCorpus& raw, const TemplateSet& templates, Alphabets& alphabets,
                       bool freeze);

/// Replaces exactly round(fraction * tokens) labels with kMissingLabel.
Corpus mask_labels(const Corpus& corpus, double fraction, std::uint64_t seed);

/// Synthetic first-order Markov sequences with label-correlated emissions.
/// Columns are: signal word, noise word, label ("L0".."L{J-1}").
RawCorpus synth_generate_raw(int num_labels, int length, int count, double transition_strength,
                             int emission_dim, std::uint64_t seed);

/// Templates used for synthetic data: one unigram feature per input column.
TemplateSet synth_templates();

/// synth_generate_raw expanded with synth_templates(); label ids follow "L<id>".
Corpus synth_generate(int num_labels, int length, int count, double transition_strength,
                      int emission_dim, std::uint64_t seed);

/// Expands further raw data under a corpus' frozen alphabets.
Corpus expand_frozen(const RawCorpus& raw, const TemplateSet& templates, const Alphabets& alphabets);

} // namespace gpsl

#endif
