#include "gmoa/datagen.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "gmoa/rng.hpp"

namespace gmoa::datagen {

void GmmSpec::validate() const {
  const int k = static_cast<int>(means.rows());
  if (k < 1) throw std::invalid_argument("gmm spec needs >= 1 component");
  if (variances.rows() != k || weights.size() != k)
    throw std::invalid_argument("gmm spec component counts disagree");
  if (variances.cols() != means.cols())
    throw std::invalid_argument("gmm spec dimension mismatch");
  if (means.cols() < 1) throw std::invalid_argument("gmm spec needs p >= 1");
  if ((variances.array() <= 0.0).any())
    throw std::invalid_argument("gmm spec variances must be positive");
  if ((weights.array() < 0.0).any() ||
      std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("gmm spec weights must sum to 1");
  if (n < 0) throw std::invalid_argument("gmm spec sample count negative");
}

std::vector<std::string> preset_names() { return {"paper2d", "paper3d"}; }

GmmSpec preset_spec(const std::string& name, int n, std::uint64_t seed) {
  GmmSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.name = name;
  if (name == "paper2d") {
    spec.means.resize(2, 2);
    spec.means << 0.0, 0.0, -3.0, -5.0;
    spec.variances.resize(2, 2);
    spec.variances << 2.0, 2.0, 1.0, 1.0;
  } else if (name == "paper3d") {
    spec.means.resize(2, 3);
    spec.means << 0.0, 0.0, 0.0, -3.0, -5.0, 10.0;
    spec.variances.resize(2, 3);
    spec.variances << 2.0, 2.0, 2.0, 1.0, 1.0, 1.0;
  } else {
    std::string known;
    for (const auto& p : preset_names()) known += " " + p;
    throw std::invalid_argument("unknown preset '" + name +
                                "', available:" + known);
  }
  spec.weights = Vector::Constant(2, 0.5);
  return spec;
}

Dataset gen_gmm(const GmmSpec& spec) {
  spec.validate();
  const int k = static_cast<int>(spec.means.rows());
  const int p = static_cast<int>(spec.means.cols());

  Rng root(spec.seed);
  Rng choice = root.split(0);
  std::vector<Rng> draw;
  draw.reserve(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) draw.push_back(root.split(c + 1));

  Dataset ds;
  ds.name = spec.name;
  ds.seed = spec.seed;
  ds.x.resize(spec.n, p);
  ds.labels.resize(static_cast<std::size_t>(spec.n));
  const Matrix stddev = spec.variances.array().sqrt();
  for (int i = 0; i < spec.n; ++i) {
    const double r = choice.uniform();
    int c = k - 1;
    double acc = 0.0;
    for (int j = 0; j < k; ++j) {
      acc += spec.weights(j);
      if (r < acc) {
        c = j;
        break;
      }
    }
    for (int j = 0; j < p; ++j)
      ds.x(i, j) = spec.means(c, j) +
                   stddev(c, j) * draw[static_cast<std::size_t>(c)].normal();
    ds.labels[static_cast<std::size_t>(i)] = c;
  }
  return ds;
}

Dataset gen_noisy_lines(const NoisyLinesSpec& spec) {
  if (spec.intercept0 == spec.intercept1)
    throw std::invalid_argument("line intercepts must differ");
  if (spec.eps <= 0.0) throw std::invalid_argument("noise level must be > 0");
  if (spec.n_per_line < 0)
    throw std::invalid_argument("per-line count negative");
  if (spec.x_max <= spec.x_min)
    throw std::invalid_argument("empty x range");

  Rng root(spec.seed);
  Dataset ds;
  ds.name = "noisy_lines";
  ds.seed = spec.seed;
  ds.x.resize(2 * spec.n_per_line, 2);
  ds.labels.resize(static_cast<std::size_t>(2 * spec.n_per_line));
  const double intercepts[2] = {spec.intercept0, spec.intercept1};
  for (int line = 0; line < 2; ++line) {
    Rng xs = root.split(static_cast<std::uint64_t>(2 * line));
    Rng noise = root.split(static_cast<std::uint64_t>(2 * line + 1));
    for (int i = 0; i < spec.n_per_line; ++i) {
      const int row = line * spec.n_per_line + i;
      const double x =
          spec.x_min + (spec.x_max - spec.x_min) * xs.uniform();
      ds.x(row, 0) = x;
      ds.x(row, 1) =
          spec.slope * x + intercepts[line] + spec.eps * noise.normal();
      ds.labels[static_cast<std::size_t>(row)] = line;
    }
  }
  return ds;
}

namespace {

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_u32_be(const std::vector<unsigned char>& bytes,
                          std::size_t offset, const std::string& path) {
  if (offset + 4 > bytes.size())
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(offset));
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path,
                 const std::optional<std::set<int>>& digit_filter,
                 std::optional<int> limit) {
  const auto img = read_file_bytes(images_path);
  const auto lab = read_file_bytes(labels_path);

  if (read_u32_be(img, 0, images_path) != 0x00000803u)
    throw FormatError(images_path +
                      ": bad image magic at byte offset 0 (want 0x00000803)");
  if (read_u32_be(lab, 0, labels_path) != 0x00000801u)
    throw FormatError(labels_path +
                      ": bad label magic at byte offset 0 (want 0x00000801)");

  const std::uint32_t n_img = read_u32_be(img, 4, images_path);
  const std::uint32_t rows = read_u32_be(img, 8, images_path);
  const std::uint32_t cols = read_u32_be(img, 12, images_path);
  const std::uint32_t n_lab = read_u32_be(lab, 4, labels_path);
  if (rows == 0 || cols == 0)
    throw FormatError(images_path + ": zero image dimension at byte offset 8");
  if (n_img != n_lab)
    throw FormatError(images_path + ": image count " + std::to_string(n_img) +
                      " != label count " + std::to_string(n_lab));

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  const std::size_t need_img = 16 + static_cast<std::size_t>(n_img) * pixels;
  if (img.size() < need_img)
    throw FormatError(images_path + ": truncated at byte offset " +
                      std::to_string(img.size()) + " (want " +
                      std::to_string(need_img) + " bytes)");
  const std::size_t need_lab = 8 + n_lab;
  if (lab.size() < need_lab)
    throw FormatError(labels_path + ": truncated at byte offset " +
                      std::to_string(lab.size()) + " (want " +
                      std::to_string(need_lab) + " bytes)");

  std::vector<std::uint32_t> keep;
  for (std::uint32_t i = 0; i < n_img; ++i) {
    const int digit = lab[8 + i];
    if (digit_filter && !digit_filter->count(digit)) continue;
    keep.push_back(i);
    if (limit && static_cast<int>(keep.size()) >= *limit) break;
  }

  Dataset ds;
  ds.name = "idx";
  ds.x.resize(static_cast<int>(keep.size()), static_cast<int>(pixels));
  ds.labels.resize(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const std::size_t base = 16 + static_cast<std::size_t>(keep[r]) * pixels;
    for (std::size_t j = 0; j < pixels; ++j)
      ds.x(static_cast<int>(r), static_cast<int>(j)) = img[base + j] / 255.0;
    ds.labels[r] = lab[8 + keep[r]];
  }
  return ds;
}

Dataset take_per_label(const Dataset& ds, int n_per_label) {
  if (!ds.has_labels())
    throw std::invalid_argument("take_per_label needs a labeled dataset");
  std::map<int, int> seen;
  std::vector<int> keep;
  for (int i = 0; i < ds.size(); ++i) {
    if (seen[ds.labels[static_cast<std::size_t>(i)]]++ < n_per_label)
      keep.push_back(i);
  }
  Dataset out;
  out.name = ds.name;
  out.seed = ds.seed;
  out.x.resize(static_cast<int>(keep.size()), ds.x.cols());
  out.labels.resize(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.x.row(static_cast<int>(r)) = ds.x.row(keep[r]);
    out.labels[r] = ds.labels[static_cast<std::size_t>(keep[r])];
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& cell, int line_no,
                    const std::string& path) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw FormatError(path + ": line " + std::to_string(line_no) +
                      ": bad number '" + cell + "'");
  return v;
}

}  // namespace

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "label";
  for (int j = 1; j <= ds.dim(); ++j) out << ",x" << j;
  out << "\n";
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.has_labels())
      out << ds.labels[static_cast<std::size_t>(i)];
    else
      out << "-";
    for (int j = 0; j < ds.dim(); ++j) out << "," << format_double(ds.x(i, j));
    out << "\n";
  }
  if (!out) throw FormatError("write to '" + path + "' failed");
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path + ": line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  if (header.empty() || header[0] != "label")
    throw FormatError(path + ": line 1: header must start with 'label'");
  const int p = static_cast<int>(header.size()) - 1;
  if (p < 1) throw FormatError(path + ": line 1: no feature columns");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  bool labeled = true;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != p + 1)
      throw FormatError(path + ": line " + std::to_string(line_no) +
                        ": expected " + std::to_string(p + 1) +
                        " columns, got " + std::to_string(cells.size()));
    if (cells[0] == "-") {
      if (!labels.empty())
        throw FormatError(path + ": line " + std::to_string(line_no) +
                          ": mixed labeled and unlabeled rows");
      labeled = false;
    } else {
      if (!labeled)
        throw FormatError(path + ": line " + std::to_string(line_no) +
                          ": mixed labeled and unlabeled rows");
      labels.push_back(static_cast<int>(
          parse_double(cells[0], line_no, path)));
    }
    std::vector<double> row(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j)
      row[static_cast<std::size_t>(j)] =
          parse_double(cells[static_cast<std::size_t>(j) + 1], line_no, path);
    rows.push_back(std::move(row));
  }

  Dataset ds;
  ds.name = "csv";
  ds.x.resize(static_cast<int>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < p; ++j)
      ds.x(static_cast<int>(i), j) = rows[i][static_cast<std::size_t>(j)];
  if (labeled) ds.labels = std::move(labels);
  return ds;
}

void save_embedding_csv(const Matrix& z, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "id";
  for (int j = 1; j <= z.cols(); ++j) out << ",z" << j;
  out << "\n";
  for (int i = 0; i < z.rows(); ++i) {
    out << i;
    for (int j = 0; j < z.cols(); ++j) out << "," << format_double(z(i, j));
    out << "\n";
  }
  if (!out) throw FormatError("write to '" + path + "' failed");
}

Matrix load_embedding_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path + ": line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  if (header.empty() || header[0] != "id")
    throw FormatError(path + ": line 1: header must start with 'id'");
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1) throw FormatError(path + ": line 1: no embedding columns");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != d + 1)
      throw FormatError(path + ": line " + std::to_string(line_no) +
                        ": expected " + std::to_string(d + 1) +
                        " columns, got " + std::to_string(cells.size()));
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
      row[static_cast<std::size_t>(j)] =
          parse_double(cells[static_cast<std::size_t>(j) + 1], line_no, path);
    rows.push_back(std::move(row));
  }

  Matrix z(static_cast<int>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < d; ++j)
      z(static_cast<int>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return z;
}

}  // namespace gmoa::datagen
