#include "evostack/search_space.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace evostack {

namespace {

// Values that must survive a 3-decimal text round trip live on a millistep
// grid. -1 marks values off the grid.
long long to_milli(double v) {
  const double scaled = v * 1000.0;
  const long long m = std::llround(scaled);
  if (std::abs(scaled - static_cast<double>(m)) > 1e-6) return -1;
  return m;
}

void check_grid_value(const char* what, double v) {
  if (to_milli(v) < 0) {
    throw ValidationError(std::string(what) +
                          " must be a multiple of 0.001, got " +
                          std::to_string(v));
  }
}

std::string format_milli(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

SearchSpace::SearchSpace(std::vector<int> head_choices,
                         std::vector<int> mlp_dim_choices, double dropout_low,
                         double dropout_high, int min_layers, int max_layers,
                         FixedHyperparams fixed, double dropout_step,
                         std::vector<ExtraDimSpec> extra_dims)
    : head_choices_(std::move(head_choices)),
      mlp_dim_choices_(std::move(mlp_dim_choices)),
      dropout_low_(dropout_low),
      dropout_high_(dropout_high),
      dropout_step_(dropout_step),
      min_layers_(min_layers),
      max_layers_(max_layers),
      fixed_(fixed),
      extra_dims_(std::move(extra_dims)) {
  if (head_choices_.empty()) throw ValidationError("head_choices is empty");
  if (mlp_dim_choices_.empty())
    throw ValidationError("mlp_dim_choices is empty");
  for (int h : head_choices_)
    if (h <= 0) throw ValidationError("head choice must be positive");
  for (int m : mlp_dim_choices_)
    if (m <= 0) throw ValidationError("mlp_dim choice must be positive");
  std::sort(head_choices_.begin(), head_choices_.end());
  head_choices_.erase(
      std::unique(head_choices_.begin(), head_choices_.end()),
      head_choices_.end());
  std::sort(mlp_dim_choices_.begin(), mlp_dim_choices_.end());
  mlp_dim_choices_.erase(
      std::unique(mlp_dim_choices_.begin(), mlp_dim_choices_.end()),
      mlp_dim_choices_.end());

  if (min_layers_ < 1) throw ValidationError("layer_count_range.low must be >= 1");
  if (min_layers_ > max_layers_)
    throw ValidationError("layer_count_range is inverted");
  if (dropout_low_ > dropout_high_)
    throw ValidationError("dropout_range is inverted");
  if (dropout_low_ < 0.0 || dropout_high_ >= 1.0)
    throw ValidationError("dropout_range must lie in [0, 1)");
  check_grid_value("dropout_range.low", dropout_low_);
  check_grid_value("dropout_range.high", dropout_high_);
  check_grid_value("dropout quantization step", dropout_step_);
  if (to_milli(dropout_step_) < 1)
    throw ValidationError("dropout quantization step must be >= 0.001");

  if (fixed_.hidden_dim <= 0 || fixed_.embed_dim <= 0 ||
      fixed_.image_size <= 0 || fixed_.patch_size <= 0 || fixed_.channels <= 0)
    throw ValidationError("fixed hyperparameters must be positive");
  if (fixed_.image_size % fixed_.patch_size != 0)
    throw ValidationError("patch_size must divide image_size");
  for (int h : head_choices_) {
    if (fixed_.embed_dim % h != 0)
      throw ValidationError("embed_dim " + std::to_string(fixed_.embed_dim) +
                            " not divisible by head choice " +
                            std::to_string(h));
  }

  for (const auto& dim : extra_dims_) {
    if (dim.key.empty()) throw ValidationError("extra dim key is empty");
    if (dim.key.find_first_of("|,=") != std::string::npos)
      throw ValidationError("extra dim key '" + dim.key +
                            "' contains a reserved character");
    if (dim.low > dim.high)
      throw ValidationError("extra dim '" + dim.key + "' range is inverted");
    check_grid_value("extra dim low", dim.low);
    check_grid_value("extra dim high", dim.high);
    check_grid_value("extra dim step", dim.step);
    if (to_milli(dim.step) < 1)
      throw ValidationError("extra dim step must be >= 0.001");
  }
}

int SearchSpace::dropout_grid_size() const {
  const long long lo = to_milli(dropout_low_);
  const long long hi = to_milli(dropout_high_);
  const long long step = to_milli(dropout_step_);
  return static_cast<int>((hi - lo) / step) + 1;
}

double SearchSpace::dropout_at(int idx) const {
  const long long lo = to_milli(dropout_low_);
  const long long step = to_milli(dropout_step_);
  return static_cast<double>(lo + idx * step) / 1000.0;
}

bool SearchSpace::contains(const LayerGene& gene) const {
  if (!std::binary_search(head_choices_.begin(), head_choices_.end(),
                          gene.heads))
    return false;
  if (!std::binary_search(mlp_dim_choices_.begin(), mlp_dim_choices_.end(),
                          gene.mlp_dim))
    return false;
  if (gene.dropout < dropout_low_ - 1e-12 ||
      gene.dropout > dropout_high_ + 1e-12)
    return false;
  if (to_milli(gene.dropout) < 0) return false;
  if (gene.extra.size() != extra_dims_.size()) return false;
  for (const auto& dim : extra_dims_) {
    auto it = gene.extra.find(dim.key);
    if (it == gene.extra.end()) return false;
    if (it->second < dim.low - 1e-12 || it->second > dim.high + 1e-12)
      return false;
    if (to_milli(it->second) < 0) return false;
  }
  return true;
}

bool SearchSpace::contains(const Chromosome& c) const {
  if (c.length() < min_layers_ || c.length() > max_layers_) return false;
  return std::all_of(c.layers.begin(), c.layers.end(),
                     [&](const LayerGene& g) { return contains(g); });
}

void SearchSpace::require(const Chromosome& c) const {
  if (!contains(c))
    throw ValidationError("chromosome " + canonical_encode(c) +
                          " is outside the search space");
}

LayerGene random_gene(const SearchSpace& space, RngStream& rng) {
  LayerGene g;
  g.heads = space.head_choices()[rng.uniform_index(
      space.head_choices().size())];
  g.mlp_dim = space.mlp_dim_choices()[rng.uniform_index(
      space.mlp_dim_choices().size())];
  g.dropout = space.dropout_at(
      static_cast<int>(rng.uniform_index(space.dropout_grid_size())));
  for (const auto& dim : space.extra_dims()) {
    const long long lo = to_milli(dim.low);
    const long long hi = to_milli(dim.high);
    const long long step = to_milli(dim.step);
    const long long count = (hi - lo) / step + 1;
    const long long pick = lo + step * static_cast<long long>(
                                           rng.uniform_index(count));
    g.extra[dim.key] = static_cast<double>(pick) / 1000.0;
  }
  return g;
}

Chromosome random_chromosome(const SearchSpace& space, RngStream& rng) {
  const int span = space.max_layers() - space.min_layers() + 1;
  const int len = space.min_layers() +
                  static_cast<int>(rng.uniform_index(span));
  Chromosome c;
  c.layers.reserve(len);
  for (int i = 0; i < len; ++i) c.layers.push_back(random_gene(space, rng));
  return c;
}

std::string canonical_encode(const Chromosome& c) {
  std::string out = "L" + std::to_string(c.length());
  for (const auto& g : c.layers) {
    out += "|h";
    out += std::to_string(g.heads);
    out += ",m";
    out += std::to_string(g.mlp_dim);
    out += ",d";
    out += format_milli(g.dropout);
    for (const auto& [key, val] : g.extra) {
      out += ',';
      out += key;
      out += '=';
      out += format_milli(val);
    }
  }
  return out;
}

namespace {

struct KeyParser {
  std::string_view text;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& why) const {
    throw ValidationError("malformed canonical key at offset " +
                          std::to_string(pos) + ": " + why);
  }

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  void expect(char c) {
    if (done() || text[pos] != c)
      fail(std::string("expected '") + c + "'");
    ++pos;
  }

  long long integer() {
    long long value = 0;
    const auto begin = text.data() + pos;
    const auto end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr == begin) fail("expected an integer");
    pos += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  // <int> "." <exactly three digits>
  double milli_value() {
    const long long whole = integer();
    expect('.');
    if (pos + 3 > text.size()) fail("expected three decimal digits");
    long long frac = 0;
    for (int i = 0; i < 3; ++i) {
      const char c = text[pos + i];
      if (c < '0' || c > '9') fail("expected three decimal digits");
      frac = frac * 10 + (c - '0');
    }
    pos += 3;
    return static_cast<double>(whole * 1000 + frac) / 1000.0;
  }

  std::string ident() {
    const std::size_t start = pos;
    while (!done() && text[pos] != '=' && text[pos] != ',' &&
           text[pos] != '|')
      ++pos;
    if (pos == start) fail("expected an extra-dimension key");
    return std::string(text.substr(start, pos - start));
  }
};

}  // namespace

Chromosome canonical_decode(std::string_view key) {
  KeyParser p{key};
  p.expect('L');
  const long long len = p.integer();
  if (len < 0) p.fail("negative length");
  Chromosome c;
  c.layers.reserve(static_cast<std::size_t>(len));
  for (long long i = 0; i < len; ++i) {
    p.expect('|');
    p.expect('h');
    LayerGene g;
    g.heads = static_cast<int>(p.integer());
    p.expect(',');
    p.expect('m');
    g.mlp_dim = static_cast<int>(p.integer());
    p.expect(',');
    p.expect('d');
    g.dropout = p.milli_value();
    while (!p.done() && p.peek() == ',') {
      p.expect(',');
      std::string name = p.ident();
      p.expect('=');
      const double val = p.milli_value();
      if (!g.extra.emplace(std::move(name), val).second)
        p.fail("duplicate extra key");
    }
    c.layers.push_back(std::move(g));
  }
  if (!p.done()) p.fail("trailing characters");
  return c;
}

namespace {

nlohmann::ordered_json gene_to_json(const LayerGene& g) {
  nlohmann::ordered_json j;
  j["heads"] = g.heads;
  j["mlp_dim"] = g.mlp_dim;
  j["dropout"] = g.dropout;
  j["extra"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : g.extra) j["extra"][k] = v;
  return j;
}

nlohmann::ordered_json fixed_to_json(const FixedHyperparams& f) {
  nlohmann::ordered_json j;
  j["hidden_dim"] = f.hidden_dim;
  j["embed_dim"] = f.embed_dim;
  j["image_size"] = f.image_size;
  j["patch_size"] = f.patch_size;
  j["channels"] = f.channels;
  return j;
}

}  // namespace

std::string architecture_to_json(const Chromosome& c,
                                 const FixedHyperparams& fixed) {
  nlohmann::ordered_json j;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& g : c.layers) j["layers"].push_back(gene_to_json(g));
  j["fixed"] = fixed_to_json(fixed);
  return j.dump(2);
}

std::pair<Chromosome, FixedHyperparams> architecture_from_json(
    std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad architecture JSON: ") + e.what());
  }
  Chromosome c;
  FixedHyperparams fixed;
  try {
    for (const auto& jl : j.at("layers")) {
      LayerGene g;
      g.heads = jl.at("heads").get<int>();
      g.mlp_dim = jl.at("mlp_dim").get<int>();
      g.dropout = jl.at("dropout").get<double>();
      if (jl.contains("extra")) {
        for (const auto& [k, v] : jl.at("extra").items())
          g.extra[k] = v.get<double>();
      }
      c.layers.push_back(std::move(g));
    }
    const auto& jf = j.at("fixed");
    fixed.hidden_dim = jf.at("hidden_dim").get<int>();
    fixed.embed_dim = jf.at("embed_dim").get<int>();
    fixed.image_size = jf.at("image_size").get<int>();
    fixed.patch_size = jf.at("patch_size").get<int>();
    fixed.channels = jf.at("channels").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad architecture JSON: ") + e.what());
  }
  return {std::move(c), fixed};
}

void save_architecture(const Chromosome& c, const FixedHyperparams& fixed,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << architecture_to_json(c, fixed) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

std::pair<Chromosome, FixedHyperparams> load_architecture(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return architecture_from_json(ss.str());
}

}  // namespace evostack
