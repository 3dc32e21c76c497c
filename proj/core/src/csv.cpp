#include "ivkit/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ivkit/errors.hpp"

namespace ivkit {

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    // trim spaces and a possible trailing CR
    while (!item.empty() && (item.back() == ' ' || item.back() == '\r' ||
                             item.back() == '\t')) {
      item.pop_back();
    }
    std::size_t start = 0;
    while (start < item.size() && (item[start] == ' ' || item[start] == '\t')) {
      ++start;
    }
    out.push_back(item.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_cell(const std::string& cell, int line_no, const std::string& col) {
  try {
    std::size_t used = 0;
    const double value = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return value;
  } catch (const std::exception&) {
    throw ParseError("column '" + col + "': cannot parse '" + cell + "'", line_no);
  }
}

std::vector<std::vector<std::string>> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw ParseError("file '" + path + "' is empty", 0);
  return rows;
}

int find_column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

IVDataset load_individual_csv(const std::string& path) {
  const auto rows = read_rows(path);
  const auto& header = rows.front();

  const int col_y = find_column(header, "y");
  const int col_d = find_column(header, "d");
  if (col_y < 0 || col_d < 0) {
    throw ParseError("header must contain columns 'y' and 'd'", 1);
  }
  std::vector<int> z_cols;
  for (int j = 1;; ++j) {
    const int c = find_column(header, "z" + std::to_string(j));
    if (c < 0) break;
    z_cols.push_back(c);
  }
  if (z_cols.empty()) {
    throw ParseError("header must contain instrument columns z1..zp", 1);
  }
  std::vector<int> x_cols;
  for (int j = 1;; ++j) {
    const int c = find_column(header, "x" + std::to_string(j));
    if (c < 0) break;
    x_cols.push_back(c);
  }

  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  IVDataset data;
  data.outcome.resize(n);
  data.exposure.resize(n);
  data.instruments.resize(n, static_cast<Eigen::Index>(z_cols.size()));
  if (!x_cols.empty()) {
    data.covariates = Mat(n, static_cast<Eigen::Index>(x_cols.size()));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i) + 1];
    const int line_no = static_cast<int>(i) + 2;
    if (row.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(row.size()),
                       line_no);
    }
    data.outcome(i) = parse_cell(row[static_cast<std::size_t>(col_y)], line_no, "y");
    data.exposure(i) = parse_cell(row[static_cast<std::size_t>(col_d)], line_no, "d");
    for (std::size_t j = 0; j < z_cols.size(); ++j) {
      data.instruments(i, static_cast<Eigen::Index>(j)) = parse_cell(
          row[static_cast<std::size_t>(z_cols[j])], line_no, "z" + std::to_string(j + 1));
    }
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      (*data.covariates)(i, static_cast<Eigen::Index>(j)) = parse_cell(
          row[static_cast<std::size_t>(x_cols[j])], line_no, "x" + std::to_string(j + 1));
    }
  }
  return data;
}

std::vector<SummaryRecord> load_summary_csv(const std::string& path) {
  const auto rows = read_rows(path);
  const auto& header = rows.front();
  const int c_g = find_column(header, "gamma_hat");
  const int c_sg = find_column(header, "se_gamma");
  const int c_G = find_column(header, "Gamma_hat");
  const int c_sG = find_column(header, "se_Gamma");
  if (c_g < 0 || c_sg < 0 || c_G < 0 || c_sG < 0) {
    throw ParseError(
        "header must contain gamma_hat, se_gamma, Gamma_hat, se_Gamma", 1);
  }
  std::vector<SummaryRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const int line_no = static_cast<int>(i) + 1;
    if (row.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(row.size()),
                       line_no);
    }
    SummaryRecord rec;
    rec.gamma_hat = parse_cell(row[static_cast<std::size_t>(c_g)], line_no, "gamma_hat");
    rec.se_gamma = parse_cell(row[static_cast<std::size_t>(c_sg)], line_no, "se_gamma");
    rec.Gamma_hat = parse_cell(row[static_cast<std::size_t>(c_G)], line_no, "Gamma_hat");
    rec.se_Gamma = parse_cell(row[static_cast<std::size_t>(c_sG)], line_no, "se_Gamma");
    records.push_back(rec);
  }
  return records;
}

void write_individual_csv(const std::string& path, const IVDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "y,d";
  for (Eigen::Index j = 0; j < dataset.p(); ++j) out << ",z" << (j + 1);
  const Eigen::Index q = dataset.covariates ? dataset.covariates->cols() : 0;
  for (Eigen::Index j = 0; j < q; ++j) out << ",x" << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < dataset.n(); ++i) {
    out << format_double(dataset.outcome(i)) << ','
        << format_double(dataset.exposure(i));
    for (Eigen::Index j = 0; j < dataset.p(); ++j) {
      out << ',' << format_double(dataset.instruments(i, j));
    }
    for (Eigen::Index j = 0; j < q; ++j) {
      out << ',' << format_double((*dataset.covariates)(i, j));
    }
    out << '\n';
  }
}

void write_summary_csv(const std::string& path,
                       const std::vector<SummaryRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "gamma_hat,se_gamma,Gamma_hat,se_Gamma\n";
  for (const SummaryRecord& rec : records) {
    out << format_double(rec.gamma_hat) << ',' << format_double(rec.se_gamma)
        << ',' << format_double(rec.Gamma_hat) << ','
        << format_double(rec.se_Gamma) << '\n';
  }
}

}  // namespace ivkit
