#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "labelshift/error.hpp"

namespace labelshift {

inline constexpr double kStdDevFloor = 1e-9;

enum class ColumnKind { Numeric, Categorical };

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> categories;  // dictionary, Categorical only
};

/// Fully numeric dataset ready for model consumption.
struct Dataset {
    std::vector<std::vector<double>> features;  // N x d
    std::vector<std::size_t> labels;            // in [0, num_classes)
    std::vector<ColumnSchema> schema;           // original feature columns
    std::vector<std::string> label_dictionary;  // token per class index
    std::size_t num_classes = 0;
    // Rows whose label token was missing from the training dictionary.
    // Such instances are retained (features usable) with label set to 0.
    std::vector<std::size_t> unknown_label_rows;

    std::size_t size() const noexcept { return features.size(); }
    std::size_t dim() const noexcept {
        return features.empty() ? 0 : features.front().size();
    }
};

struct RawCell {
    std::string text;
    bool missing = false;
};

/// Parsed but untyped CSV contents.
struct RawTable {
    std::vector<std::string> column_names;
    std::vector<std::vector<RawCell>> rows;
    std::size_t label_column = 0;

    std::size_t num_rows() const noexcept { return rows.size(); }
    std::size_t num_cols() const noexcept { return column_names.size(); }

    RawTable subset(std::span<const std::size_t> row_indices) const {
        RawTable out;
        out.column_names = column_names;
        out.label_column = label_column;
        out.rows.reserve(row_indices.size());
        for (std::size_t i : row_indices) out.rows.push_back(rows[i]);
        return out;
    }
};

namespace detail {

// RFC 4180 field splitting for one logical record. `pos` points into `text`
// at the first character of the record and is left one past its end.
inline std::vector<std::string> parse_csv_record(const std::string& text,
                                                 std::size_t& pos,
                                                 std::size_t record_index) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool done = false;
    while (!done) {
        if (pos >= text.size()) {
            if (quoted) {
                fail(ErrorCode::ParseError,
                     "unterminated quote in record " + std::to_string(record_index));
            }
            break;
        }
        const char c = text[pos];
        if (quoted) {
            if (c == '"') {
                if (pos + 1 < text.size() && text[pos + 1] == '"') {
                    field.push_back('"');
                    pos += 2;
                } else {
                    quoted = false;
                    ++pos;
                }
            } else {
                field.push_back(c);
                ++pos;
            }
            continue;
        }
        switch (c) {
            case '"':
                quoted = true;
                ++pos;
                break;
            case ',':
                fields.push_back(std::move(field));
                field.clear();
                ++pos;
                break;
            case '\r':
                if (pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
                [[fallthrough]];
            case '\n':
                ++pos;
                done = true;
                break;
            default:
                field.push_back(c);
                ++pos;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

inline bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    std::size_t consumed = 0;
    try {
        out = std::stod(text, &consumed);
    } catch (const std::exception&) {
        return false;
    }
    while (consumed < text.size() &&
           (text[consumed] == ' ' || text[consumed] == '\t')) {
        ++consumed;
    }
    return consumed == text.size() && std::isfinite(out);
}

inline RawCell make_cell(std::string token) {
    RawCell cell;
    // OpenML convention: empty cells and the literal "?" are missing values.
    cell.missing = token.empty() || token == "?";
    cell.text = std::move(token);
    return cell;
}

}  // namespace detail

/// Load an RFC 4180 CSV. The label column is selected by header name, or by
/// zero-based index when the name does not match (or there is no header).
inline RawTable load_csv(const std::string& path, const std::string& label_column,
                         bool has_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    RawTable table;
    std::size_t pos = 0;
    std::size_t record_index = 0;
    std::vector<std::vector<std::string>> records;
    while (pos < text.size()) {
        auto fields = detail::parse_csv_record(text, pos, record_index);
        if (fields.size() == 1 && fields[0].empty() && pos >= text.size()) {
            break;  // trailing newline
        }
        records.push_back(std::move(fields));
        ++record_index;
    }
    if (records.empty()) {
        fail(ErrorCode::ParseError, path + " has no records");
    }

    const std::size_t width = records.front().size();
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].size() != width) {
            fail(ErrorCode::ParseError,
                 path + ": record " + std::to_string(r) + " has " +
                     std::to_string(records[r].size()) + " fields, expected " +
                     std::to_string(width));
        }
    }

    std::size_t first_data = 0;
    if (has_header) {
        table.column_names = records.front();
        first_data = 1;
    } else {
        for (std::size_t c = 0; c < width; ++c) {
            table.column_names.push_back("c" + std::to_string(c));
        }
    }

    // Resolve the label column: exact header name first, then numeric index.
    auto it = std::find(table.column_names.begin(), table.column_names.end(),
                        label_column);
    if (it != table.column_names.end()) {
        table.label_column =
            static_cast<std::size_t>(it - table.column_names.begin());
    } else {
        std::size_t idx = 0;
        bool numeric = !label_column.empty();
        for (char ch : label_column) {
            if (ch < '0' || ch > '9') {
                numeric = false;
                break;
            }
            idx = idx * 10 + static_cast<std::size_t>(ch - '0');
        }
        if (!numeric || idx >= width) {
            fail(ErrorCode::MissingLabelColumn,
                 "label column '" + label_column + "' not found in " + path);
        }
        table.label_column = idx;
    }

    table.rows.reserve(records.size() - first_data);
    for (std::size_t r = first_data; r < records.size(); ++r) {
        std::vector<RawCell> row;
        row.reserve(width);
        for (auto& token : records[r]) row.push_back(detail::make_cell(std::move(token)));
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty()) {
        fail(ErrorCode::ParseError, path + " has a header but no data rows");
    }
    return table;
}

struct NumericStats {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Train-derived preprocessing state; applying it to another table never refits.
struct PreprocessStats {
    std::vector<ColumnSchema> schema;            // feature columns, table order
    std::vector<NumericStats> numeric;           // parallel to schema
    std::vector<std::string> categorical_mode;   // parallel to schema
    std::vector<std::size_t> missing_counts;     // observed while fitting
    std::vector<std::string> label_dictionary;
};

namespace detail {

inline std::vector<std::size_t> feature_columns(const RawTable& table) {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < table.num_cols(); ++c) {
        if (c != table.label_column) cols.push_back(c);
    }
    return cols;
}

// Shared encoding pass once schema, stats and dictionaries are fixed.
inline Dataset encode(const RawTable& table, const PreprocessStats& stats) {
    Dataset out;
    out.schema = stats.schema;
    out.label_dictionary = stats.label_dictionary;
    out.num_classes = stats.label_dictionary.size();

    const auto cols = feature_columns(table);
    if (cols.size() != stats.schema.size()) {
        fail(ErrorCode::DimensionMismatch,
             "table has " + std::to_string(cols.size()) +
                 " feature columns, stats describe " +
                 std::to_string(stats.schema.size()));
    }

    out.features.reserve(table.num_rows());
    out.labels.reserve(table.num_rows());
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
        std::vector<double> row;
        for (std::size_t f = 0; f < cols.size(); ++f) {
            const RawCell& cell = table.rows[r][cols[f]];
            const ColumnSchema& schema = stats.schema[f];
            if (schema.kind == ColumnKind::Numeric) {
                double value = stats.numeric[f].mean;  // mean imputation
                if (!cell.missing) {
                    if (!parse_double(cell.text, value)) {
                        fail(ErrorCode::ParseError,
                             "non-numeric value '" + cell.text +
                                 "' in numeric column " + schema.name + ", row " +
                                 std::to_string(r));
                    }
                }
                row.push_back((value - stats.numeric[f].mean) /
                              stats.numeric[f].stddev);
            } else {
                const std::string& token =
                    cell.missing ? stats.categorical_mode[f] : cell.text;
                // One indicator per dictionary entry plus a trailing
                // slot for categories unseen at fit time.
                const std::size_t width = schema.categories.size() + 1;
                const std::size_t start = row.size();
                row.resize(start + width, 0.0);
                auto pos = std::lower_bound(schema.categories.begin(),
                                            schema.categories.end(), token);
                if (pos != schema.categories.end() && *pos == token) {
                    row[start + static_cast<std::size_t>(
                                    pos - schema.categories.begin())] = 1.0;
                } else {
                    row[start + width - 1] = 1.0;  // unseen slot
                }
            }
        }
        const RawCell& label_cell = table.rows[r][table.label_column];
        if (label_cell.missing) {
            fail(ErrorCode::ParseError,
                 "missing label value at row " + std::to_string(r));
        }
        auto pos = std::lower_bound(stats.label_dictionary.begin(),
                                    stats.label_dictionary.end(), label_cell.text);
        if (pos != stats.label_dictionary.end() && *pos == label_cell.text) {
            out.labels.push_back(static_cast<std::size_t>(
                pos - stats.label_dictionary.begin()));
        } else {
            out.unknown_label_rows.push_back(r);
            out.labels.push_back(0);
        }
        out.features.push_back(std::move(row));
    }
    return out;
}

}  // namespace detail

/// Infer schema and stats from this table, then encode it.
/// Numeric columns are mean-imputed and z-scored (population stddev with a
/// floor); categorical columns are mode-imputed and one-hot encoded with an
/// explicit unseen slot; labels are dictionary-encoded.
inline std::pair<Dataset, PreprocessStats> preprocess_fit(const RawTable& table) {
    const auto cols = detail::feature_columns(table);
    if (cols.empty()) {
        fail(ErrorCode::EmptyFeatures, "table has no feature columns");
    }
    if (table.num_rows() == 0) {
        fail(ErrorCode::EmptyFeatures, "table has no rows");
    }

    PreprocessStats stats;
    for (std::size_t f = 0; f < cols.size(); ++f) {
        const std::size_t c = cols[f];
        bool numeric = true;
        std::size_t missing = 0;
        std::vector<double> values;
        for (const auto& row : table.rows) {
            const RawCell& cell = row[c];
            if (cell.missing) {
                ++missing;
                continue;
            }
            double v;
            if (detail::parse_double(cell.text, v)) {
                values.push_back(v);
            } else {
                numeric = false;
                break;
            }
        }

        ColumnSchema schema;
        schema.name = table.column_names[c];
        NumericStats num;
        std::string mode;
        if (numeric) {
            schema.kind = ColumnKind::Numeric;
            if (!values.empty()) {
                double mean = 0.0;
                for (double v : values) mean += v;
                mean /= static_cast<double>(values.size());
                double var = 0.0;
                for (double v : values) var += (v - mean) * (v - mean);
                var /= static_cast<double>(values.size());
                num.mean = mean;
                num.stddev = std::max(std::sqrt(var), kStdDevFloor);
            } else {
                num.mean = 0.0;
                num.stddev = kStdDevFloor;
            }
        } else {
            schema.kind = ColumnKind::Categorical;
            std::map<std::string, std::size_t> counts;
            for (const auto& row : table.rows) {
                const RawCell& cell = row[c];
                if (!cell.missing) ++counts[cell.text];
            }
            missing = 0;
            for (const auto& row : table.rows) missing += row[c].missing ? 1 : 0;
            schema.categories.reserve(counts.size());
            std::size_t best = 0;
            for (const auto& [token, count] : counts) {
                schema.categories.push_back(token);
                if (count > best) {  // ties keep the lexicographically smaller token
                    best = count;
                    mode = token;
                }
            }
        }
        stats.schema.push_back(std::move(schema));
        stats.numeric.push_back(num);
        stats.categorical_mode.push_back(std::move(mode));
        stats.missing_counts.push_back(missing);
    }

    std::map<std::string, std::size_t> label_tokens;
    for (std::size_t r = 0; r < table.num_rows(); ++r) {
        const RawCell& cell = table.rows[r][table.label_column];
        if (cell.missing) {
            fail(ErrorCode::ParseError,
                 "missing label value at row " + std::to_string(r));
        }
        ++label_tokens[cell.text];
    }
    for (const auto& [token, count] : label_tokens) {
        stats.label_dictionary.push_back(token);
    }

    Dataset dataset = detail::encode(table, stats);
    return {std::move(dataset), std::move(stats)};
}

/// Encode a table with previously fitted stats. Unseen categories go to the
/// unseen slot; unknown label tokens are flagged and the instance retained.
inline Dataset preprocess_apply(const RawTable& table, const PreprocessStats& stats) {
    if (stats.schema.empty()) {
        fail(ErrorCode::EmptyFeatures, "stats describe no feature columns");
    }
    return detail::encode(table, stats);
}

namespace detail {

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

/// Write selected raw rows back out as CSV (header included).
inline void write_csv(const std::string& path, const RawTable& table,
                      std::span<const std::size_t> row_indices) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    for (std::size_t c = 0; c < table.column_names.size(); ++c) {
        if (c) out << ',';
        out << detail::csv_escape(table.column_names[c]);
    }
    out << '\n';
    for (std::size_t i : row_indices) {
        const auto& row = table.rows[i];
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << detail::csv_escape(row[c].text);
        }
        out << '\n';
    }
}

/// Write an encoded dataset as CSV: feature columns f0..f{d-1}, then `label`
/// holding the dictionary token (or the raw index when no dictionary exists).
inline void write_csv(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    const std::size_t d = dataset.dim();
    for (std::size_t f = 0; f < d; ++f) out << 'f' << f << ',';
    out << "label\n";
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        for (std::size_t f = 0; f < d; ++f) {
            out << detail::format_double(dataset.features[r][f]) << ',';
        }
        const std::size_t label = dataset.labels[r];
        if (label < dataset.label_dictionary.size()) {
            out << detail::csv_escape(dataset.label_dictionary[label]);
        } else {
            out << label;
        }
        out << '\n';
    }
}

}  // namespace labelshift
