#pragma once

#include <string>
#include <vector>

#include "nutriscreen/common.hpp"

namespace nutriscreen {

// Untyped survey rows as parsed from CSV. Cells hold raw text; "" and "NA"
// are the missing-value spellings accepted on input.
struct RawTable {
    std::vector<std::string> column_names;
    std::vector<std::vector<std::string>> rows;  // rows[i][j] pairs with column_names[j]

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_cols() const { return column_names.size(); }
    int column_index(const std::string& name) const;  // -1 if absent
};

struct CsvParseError : ValidationError {
    using ValidationError::ValidationError;
};

// RFC-4180-ish: quoted fields, doubled quotes, CRLF tolerated.
RawTable read_csv(const std::string& path);
RawTable parse_csv(const std::string& text);

void write_csv(const std::string& path, const RawTable& table);
std::string csv_escape(const std::string& cell);

bool is_missing_cell(const std::string& cell);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace nutriscreen
