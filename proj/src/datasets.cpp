#include "kairanban/datasets.hpp"

#include <charconv>
#include <filesystem>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "kairanban/text.hpp"

namespace kairanban {

std::string_view to_string(DatasetName d) {
    switch (d) {
        case DatasetName::Sst5: return "sst5";
        case DatasetName::TweetEval: return "tweeteval";
        case DatasetName::FinancialPhraseBank: return "financial_phrasebank";
    }
    return "?";
}

DatasetName parse_dataset_name(std::string_view s) {
    const auto v = text::to_lower(text::trim(s));
    if (v == "sst5") return DatasetName::Sst5;
    if (v == "tweeteval") return DatasetName::TweetEval;
    if (v == "financial_phrasebank") return DatasetName::FinancialPhraseBank;
    throw Error(ErrorCode::InvalidConfig, "unknown dataset '" + std::string(s) + "'");
}

LabelSpace label_space_for(DatasetName d) {
    return d == DatasetName::Sst5 ? LabelSpace::five_class() : LabelSpace::three_class();
}

std::string_view to_string(DatasetFormat f) {
    switch (f) {
        case DatasetFormat::Tsv: return "tsv";
        case DatasetFormat::Csv: return "csv";
        case DatasetFormat::Paired: return "paired";
        case DatasetFormat::AtSeparated: return "at";
    }
    return "?";
}

DatasetFormat parse_dataset_format(std::string_view s) {
    if (s == "tsv") return DatasetFormat::Tsv;
    if (s == "csv") return DatasetFormat::Csv;
    if (s == "paired") return DatasetFormat::Paired;
    if (s == "at") return DatasetFormat::AtSeparated;
    throw Error(ErrorCode::InvalidConfig, "unknown dataset format '" + std::string(s) + "'");
}

DatasetSpec DatasetSpec::standard(DatasetName name, std::string path) {
    DatasetSpec spec;
    spec.name = name;
    spec.space = label_space_for(name);
    spec.path = std::move(path);
    spec.format = name == DatasetName::FinancialPhraseBank ? DatasetFormat::AtSeparated : DatasetFormat::Tsv;
    return spec;
}

namespace {

std::string read_source(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path);
    return text::read_file(path);
}

class RowBuilder {
public:
    explicit RowBuilder(const DatasetSpec& spec) : spec_(spec) {}

    Instance make(std::size_t row, std::string_view raw_text, std::string_view raw_label) const {
        const auto body = text::trim(raw_text);
        if (body.empty()) {
            throw Error(ErrorCode::MalformedRow, fmt::format("{} row {}: empty text", spec_.path, row));
        }
        return Instance{fmt::format("{}:{}", to_string(spec_.name), row), std::string(body),
                        label_index(row, raw_label)};
    }

private:
    int label_index(std::size_t row, std::string_view raw) const {
        const auto label = text::trim(raw);
        const auto by_name = spec_.space.index_of(label);
        if (by_name < spec_.space.k()) return static_cast<int>(by_name);
        int idx = -1;
        const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), idx);
        if (ec == std::errc() && ptr == label.data() + label.size() && idx >= 0 &&
            static_cast<std::size_t>(idx) < spec_.space.k()) {
            return idx;
        }
        throw Error(ErrorCode::UnknownLabel,
                    fmt::format("{} row {}: label '{}' is not in the label space", spec_.path, row, label));
    }

    const DatasetSpec& spec_;
};

std::vector<Instance> load_tsv(const DatasetSpec& spec, char sep, bool split_last) {
    const RowBuilder builder(spec);
    std::vector<Instance> out;
    const auto content = read_source(spec.path);
    std::size_t row = 0;
    for (auto line : text::split_lines(content)) {
        ++row;
        if (text::trim(line).empty()) continue;
        if (!text::is_valid_utf8(line)) line = text::latin1_to_utf8(line);
        const auto cut = split_last ? line.rfind(sep) : line.find(sep);
        if (cut == std::string::npos) {
            throw Error(ErrorCode::MalformedRow,
                        fmt::format("{} row {}: missing '{}' separator", spec.path, row, sep == '\t' ? "\\t" : "@"));
        }
        out.push_back(builder.make(row, std::string_view(line).substr(0, cut),
                                   std::string_view(line).substr(cut + 1)));
    }
    return out;
}

std::vector<Instance> load_paired(const DatasetSpec& spec) {
    const RowBuilder builder(spec);
    const auto texts = text::split_lines(read_source(spec.path));
    const auto labels = text::split_lines(read_source(spec.label_path));
    if (texts.size() != labels.size()) {
        throw Error(ErrorCode::MalformedRow, fmt::format("{} has {} lines but {} has {}", spec.path, texts.size(),
                                                         spec.label_path, labels.size()));
    }
    std::vector<Instance> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        out.push_back(builder.make(i + 1, texts[i], labels[i]));
    }
    return out;
}

// Minimal RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& content, const std::string& path) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                record.push_back(std::move(field));
                records.push_back(std::move(record));
            }
            record.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) throw Error(ErrorCode::MalformedRow, path + ": unterminated quoted field");
    if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<Instance> load_csv(const DatasetSpec& spec) {
    const RowBuilder builder(spec);
    const auto records = parse_csv(read_source(spec.path), spec.path);
    if (records.empty()) throw Error(ErrorCode::MalformedRow, spec.path + ": missing header row");
    std::size_t text_col = records[0].size();
    std::size_t label_col = records[0].size();
    for (std::size_t c = 0; c < records[0].size(); ++c) {
        const auto name = text::to_lower(text::trim(records[0][c]));
        if (name == "text" || name == "sentence") text_col = c;
        if (name == "label") label_col = c;
    }
    if (text_col == records[0].size() || label_col == records[0].size()) {
        throw Error(ErrorCode::MalformedRow, spec.path + ": header must name 'text' and 'label' columns");
    }
    std::vector<Instance> out;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != records[0].size()) {
            throw Error(ErrorCode::MalformedRow,
                        fmt::format("{} row {}: expected {} fields, got {}", spec.path, r, records[0].size(), rec.size()));
        }
        out.push_back(builder.make(r, rec[text_col], rec[label_col]));
    }
    return out;
}

}  // namespace

std::vector<Instance> load_dataset(const DatasetSpec& spec) {
    switch (spec.format) {
        case DatasetFormat::Tsv: return load_tsv(spec, '\t', false);
        case DatasetFormat::AtSeparated: return load_tsv(spec, '@', true);
        case DatasetFormat::Paired: return load_paired(spec);
        case DatasetFormat::Csv: return load_csv(spec);
    }
    return {};
}

std::vector<Instance> sample_instances(const std::vector<Instance>& data, std::size_t n, std::uint64_t seed) {
    if (n > data.size()) {
        throw Error(ErrorCode::SampleTooLarge,
                    fmt::format("cannot draw {} instances from {}", n, data.size()));
    }
    std::mt19937_64 rng(seed);
    // Unbiased draw in [0, bound) by rejection.
    const auto below = [&rng](std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = rng();
        } while (x >= limit);
        return x % bound;
    };
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<Instance> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(below(order.size() - i));
        std::swap(order[i], order[j]);
        out.push_back(data[order[i]]);
    }
    return out;
}

}  // namespace kairanban
