#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kairanban/core.hpp"

namespace kairanban {

struct Instance {
    std::string id;  // "<dataset>:<row_number>"
    std::string text;
    int gold_label_index = 0;

    bool operator==(const Instance&) const = default;
};

enum class DatasetName { Sst5, TweetEval, FinancialPhraseBank };

std::string_view to_string(DatasetName d);  // sst5 | tweeteval | financial_phrasebank
DatasetName parse_dataset_name(std::string_view s);
LabelSpace label_space_for(DatasetName d);

enum class DatasetFormat {
    Tsv,          // text TAB label
    Csv,          // header row naming "text" and "label" columns
    Paired,       // one text per line in `path`, one label per line in `label_path`
    AtSeparated,  // sentence@label (Financial PhraseBank); Latin-1 tolerated
};

std::string_view to_string(DatasetFormat f);
DatasetFormat parse_dataset_format(std::string_view s);

struct DatasetSpec {
    DatasetName name = DatasetName::TweetEval;
    LabelSpace space = LabelSpace::three_class();
    std::string path;
    std::string label_path;  // Paired only
    DatasetFormat format = DatasetFormat::Tsv;

    /// The usual on-disk layout for `name`, read from `path`.
    static DatasetSpec standard(DatasetName name, std::string path);
};

/// Labels are matched by name (case-insensitive) or by integer index into the
/// label space. Errors: FileNotFound, MalformedRow, UnknownLabel.
std::vector<Instance> load_dataset(const DatasetSpec& spec);

/// `n` draws without replacement, in draw order. Uses its own bounded draw on
/// top of mt19937_64 so the result is identical across standard libraries.
std::vector<Instance> sample_instances(const std::vector<Instance>& data, std::size_t n, std::uint64_t seed);

}  // namespace kairanban
