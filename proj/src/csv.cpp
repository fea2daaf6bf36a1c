#include "nutriscreen/csv.hpp"

#include <fstream>
#include <sstream>

namespace nutriscreen {

int RawTable::column_index(const std::string& name) const {
    for (std::size_t j = 0; j < column_names.size(); ++j)
        if (column_names[j] == name) return static_cast<int>(j);
    return -1;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << content;
}

bool is_missing_cell(const std::string& cell) { return cell.empty() || cell == "NA"; }

namespace {

std::vector<std::vector<std::string>> parse_records(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string cell;
    bool in_quotes = false;
    bool cell_started = false;

    auto end_cell = [&] {
        record.push_back(cell);
        cell.clear();
        cell_started = false;
    };
    auto end_record = [&] {
        end_cell();
        records.push_back(std::move(record));
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!cell.empty() || cell_started)
                    throw CsvParseError("stray quote inside unquoted cell");
                in_quotes = true;
                cell_started = true;
                break;
            case ',':
                end_cell();
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                break;
            default:
                cell.push_back(c);
                cell_started = true;
        }
    }
    if (in_quotes) throw CsvParseError("unterminated quoted cell");
    if (cell_started || !cell.empty() || !record.empty()) end_record();
    return records;
}

}  // namespace

RawTable parse_csv(const std::string& text) {
    RawTable table;
    auto records = parse_records(text);
    if (records.empty()) throw CsvParseError("empty CSV input");
    table.column_names = std::move(records.front());
    const std::size_t width = table.column_names.size();
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != width) {
            throw CsvParseError("row " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                                " cells, expected " + std::to_string(width));
        }
        table.rows.push_back(std::move(records[i]));
    }
    return table;
}

RawTable read_csv(const std::string& path) { return parse_csv(read_text_file(path)); }

std::string csv_escape(const std::string& cell) {
    const bool needs_quotes = cell.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_csv(const std::string& path, const RawTable& table) {
    std::ostringstream out;
    for (std::size_t j = 0; j < table.column_names.size(); ++j) {
        if (j) out << ',';
        out << csv_escape(table.column_names[j]);
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << csv_escape(row[j]);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace nutriscreen
