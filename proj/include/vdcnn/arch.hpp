// SPDX-License-Identifier: Apache-2.0
//
// Declarative network descriptions, the shape-derivation engine, the model
// catalog and the structural rule checker for very deep CNNs.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vdcnn/errors.hpp"
#include "vdcnn/ops.hpp"
#include "vdcnn/tensor.hpp"

namespace vdcnn {

enum class LayerKind { kConv, kPool, kFc, kRelu, kSigmoid, kFlatten, kConcatAux };

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  // conv
  std::size_t out_maps = 0, kt = 0, kf = 0, pad_t = 0, pad_f = 0;
  // pool; a stride of 0 means "equal to the window"
  std::size_t pt = 0, pf = 0, stride_t = 0, stride_f = 0;
  bool truncate = false;
  // fc
  std::size_t out_dim = 0;

  static LayerSpec conv(std::size_t maps, std::size_t kt, std::size_t kf, std::size_t pad_t = 0,
                        std::size_t pad_f = 0) {
    LayerSpec l;
    l.kind = LayerKind::kConv;
    l.out_maps = maps;
    l.kt = kt;
    l.kf = kf;
    l.pad_t = pad_t;
    l.pad_f = pad_f;
    return l;
  }
  static LayerSpec pool(std::size_t pt, std::size_t pf, bool truncate = false) {
    LayerSpec l;
    l.kind = LayerKind::kPool;
    l.pt = pt;
    l.pf = pf;
    l.truncate = truncate;
    return l;
  }
  static LayerSpec fc(std::size_t dim) {
    LayerSpec l;
    l.kind = LayerKind::kFc;
    l.out_dim = dim;
    return l;
  }
  static LayerSpec of(LayerKind k) {
    LayerSpec l;
    l.kind = k;
    return l;
  }

  bool overlapping() const {
    return kind == LayerKind::kPool && ((stride_t != 0 && stride_t != pt) ||
                                        (stride_f != 0 && stride_f != pf));
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class Family { kVdcnn, kCnn, kDnn };

struct ArchitectureSpec {
  std::string name;
  Family family = Family::kVdcnn;
  Shape input_shape;  // (maps, T, F)
  std::vector<LayerSpec> layers;
  std::size_t n_states = 16;

  std::size_t conv_layers() const {
    return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](auto& l) {
      return l.kind == LayerKind::kConv;
    }));
  }
  std::size_t fc_hidden_layers() const {
    return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](auto& l) {
      return l.kind == LayerKind::kFc;
    }));
  }

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

// ---------------------------------------------------------------------------
// Text format

inline const char* family_name(Family f) {
  switch (f) {
    case Family::kVdcnn: return "vdcnn";
    case Family::kCnn: return "cnn";
    case Family::kDnn: return "dnn";
  }
  return "vdcnn";
}

inline std::string layer_to_string(const LayerSpec& l) {
  std::ostringstream os;
  switch (l.kind) {
    case LayerKind::kConv:
      os << "conv " << l.out_maps << ' ' << l.kt << 'x' << l.kf << " pad " << l.pad_t << 'x'
         << l.pad_f;
      break;
    case LayerKind::kPool:
      os << "pool " << l.pt << 'x' << l.pf;
      if (l.stride_t != 0 || l.stride_f != 0) os << " stride " << l.stride_t << 'x' << l.stride_f;
      if (l.truncate) os << " trunc";
      break;
    case LayerKind::kFc: os << "fc " << l.out_dim; break;
    case LayerKind::kRelu: os << "relu"; break;
    case LayerKind::kSigmoid: os << "sigmoid"; break;
    case LayerKind::kFlatten: os << "flatten"; break;
    case LayerKind::kConcatAux: os << "concat-aux"; break;
  }
  return os.str();
}

inline std::string format_spec(const ArchitectureSpec& spec) {
  std::ostringstream os;
  os << "name " << spec.name << '\n';
  os << "family " << family_name(spec.family) << '\n';
  os << "input " << spec.input_shape.at(0) << 'x' << spec.input_shape.at(1) << 'x'
     << spec.input_shape.at(2) << '\n';
  os << "states " << spec.n_states << '\n';
  for (const auto& l : spec.layers) os << layer_to_string(l) << '\n';
  return os.str();
}

namespace detail {

inline std::vector<std::size_t> parse_dims(const std::string& tok, std::size_t count,
                                           std::size_t line_no) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= tok.size()) {
    const std::size_t next = std::min(tok.find('x', pos), tok.size());
    const std::string part = tok.substr(pos, next - pos);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw FormatError("line " + std::to_string(line_no) + ": bad extent '" + tok + "'");
    out.push_back(std::stoul(part));
    pos = next + 1;
  }
  if (out.size() != count)
    throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(count) +
                      " extents in '" + tok + "'");
  return out;
}

inline std::size_t parse_count(const std::string& tok, std::size_t line_no) {
  return parse_dims(tok, 1, line_no)[0];
}

}  // namespace detail

inline ArchitectureSpec parse_spec(const std::string& text) {
  ArchitectureSpec spec;
  spec.name.clear();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_input = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& key = tok[0];
    const auto need = [&](std::size_t n) {
      if (tok.size() != n)
        throw FormatError("line " + std::to_string(line_no) + ": '" + key + "' expects " +
                          std::to_string(n - 1) + " argument(s)");
    };
    if (key == "name") {
      need(2);
      spec.name = tok[1];
    } else if (key == "family") {
      need(2);
      if (tok[1] == "vdcnn") spec.family = Family::kVdcnn;
      else if (tok[1] == "cnn") spec.family = Family::kCnn;
      else if (tok[1] == "dnn") spec.family = Family::kDnn;
      else throw FormatError("line " + std::to_string(line_no) + ": unknown family " + tok[1]);
    } else if (key == "input") {
      need(2);
      const auto d = detail::parse_dims(tok[1], 3, line_no);
      spec.input_shape = {d[0], d[1], d[2]};
      have_input = true;
    } else if (key == "states") {
      need(2);
      spec.n_states = detail::parse_count(tok[1], line_no);
    } else if (key == "conv") {
      if (tok.size() != 3 && tok.size() != 5)
        throw FormatError("line " + std::to_string(line_no) +
                          ": conv expects '<maps> <kt>x<kf> [pad <pt>x<pf>]'");
      const auto k = detail::parse_dims(tok[2], 2, line_no);
      std::size_t pt = 0, pf = 0;
      if (tok.size() == 5) {
        if (tok[3] != "pad") throw FormatError("line " + std::to_string(line_no) + ": expected 'pad'");
        const auto p = detail::parse_dims(tok[4], 2, line_no);
        pt = p[0];
        pf = p[1];
      }
      spec.layers.push_back(LayerSpec::conv(detail::parse_count(tok[1], line_no), k[0], k[1], pt, pf));
    } else if (key == "pool") {
      if (tok.size() < 2) throw FormatError("line " + std::to_string(line_no) + ": pool needs extents");
      const auto p = detail::parse_dims(tok[1], 2, line_no);
      LayerSpec l = LayerSpec::pool(p[0], p[1]);
      for (std::size_t i = 2; i < tok.size(); ++i) {
        if (tok[i] == "trunc") {
          l.truncate = true;
        } else if (tok[i] == "stride" && i + 1 < tok.size()) {
          const auto s = detail::parse_dims(tok[++i], 2, line_no);
          l.stride_t = s[0];
          l.stride_f = s[1];
        } else {
          throw FormatError("line " + std::to_string(line_no) + ": unexpected '" + tok[i] + "'");
        }
      }
      spec.layers.push_back(l);
    } else if (key == "fc") {
      need(2);
      spec.layers.push_back(LayerSpec::fc(detail::parse_count(tok[1], line_no)));
    } else if (key == "relu") {
      need(1);
      spec.layers.push_back(LayerSpec::of(LayerKind::kRelu));
    } else if (key == "sigmoid") {
      need(1);
      spec.layers.push_back(LayerSpec::of(LayerKind::kSigmoid));
    } else if (key == "flatten") {
      need(1);
      spec.layers.push_back(LayerSpec::of(LayerKind::kFlatten));
    } else if (key == "concat-aux") {
      need(1);
      spec.layers.push_back(LayerSpec::of(LayerKind::kConcatAux));
    } else {
      throw FormatError("line " + std::to_string(line_no) + ": unknown directive '" + key + "'");
    }
  }
  if (spec.name.empty()) throw FormatError("spec has no 'name' line");
  if (!have_input) throw FormatError("spec has no 'input' line");
  return spec;
}

// ---------------------------------------------------------------------------
// Shape derivation

struct ShapeTraceRow {
  std::size_t layer = 0;  // index into spec.layers; layers.size() is the output layer
  std::string description;
  Shape in_shape;
  Shape out_shape;
  std::size_t parameter_count = 0;
  std::size_t receptive_field_t = 1;
  std::size_t receptive_field_f = 1;
};

struct ShapeTrace {
  std::vector<ShapeTraceRow> rows;
  std::size_t total_parameters = 0;

  /// Spatial extent (T, F) entering the first flatten, if any.
  std::optional<std::pair<std::size_t, std::size_t>> pre_flatten_map;
  std::size_t flat_dim = 0;  // vector length after flatten
};

/// Walks the layer list, applying T' = T + 2 pad - k + 1 for convs and floor
/// division for pools. Receptive fields use the usual size/jump recursion.
/// aux_width is added to the vector length at a concat-aux layer.
inline ShapeTrace derive_shapes(const ArchitectureSpec& spec, std::size_t aux_width = 0) {
  if (spec.input_shape.size() != 3 || shape_size(spec.input_shape) == 0)
    throw ShapeError(spec.name + ": input must be (maps, T, F) with positive extents");
  if (spec.n_states == 0) throw ShapeError(spec.name + ": states must be positive");
  ShapeTrace trace;
  Shape cur = spec.input_shape;
  bool spatial = true;
  std::size_t rf_t = 1, rf_f = 1, jump_t = 1, jump_f = 1;
  const auto fail = [&](std::size_t i, const std::string& why) {
    throw ShapeError(spec.name + ": layer " + std::to_string(i) + " (" +
                     layer_to_string(spec.layers[i]) + "): " + why);
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    ShapeTraceRow row{i, layer_to_string(l), cur, cur, 0, rf_t, rf_f};
    switch (l.kind) {
      case LayerKind::kConv: {
        if (!spatial) fail(i, "convolution after flatten");
        if (l.out_maps == 0 || l.kt == 0 || l.kf == 0) fail(i, "zero filter extent or map count");
        const std::size_t t = cur[1] + 2 * l.pad_t, f = cur[2] + 2 * l.pad_f;
        if (t < l.kt || f < l.kf)
          fail(i, "non-positive output extent from input " + shape_string(cur));
        row.parameter_count = l.out_maps * cur[0] * l.kt * l.kf + l.out_maps;
        cur = {l.out_maps, t - l.kt + 1, f - l.kf + 1};
        rf_t += (l.kt - 1) * jump_t;
        rf_f += (l.kf - 1) * jump_f;
        break;
      }
      case LayerKind::kPool: {
        if (!spatial) fail(i, "pooling after flatten");
        if (l.overlapping()) fail(i, "overlapping pooling is not supported");
        try {
          cur = pooled_shape(cur, PoolParams{l.pt, l.pf, l.truncate});
        } catch (const DivisibilityError& e) {
          throw DivisibilityError(spec.name + ": layer " + std::to_string(i) + ": " + e.what());
        } catch (const DimensionError& e) {
          fail(i, e.what());
        }
        rf_t += (l.pt - 1) * jump_t;
        rf_f += (l.pf - 1) * jump_f;
        jump_t *= l.pt;
        jump_f *= l.pf;
        break;
      }
      case LayerKind::kFlatten:
        if (!spatial) fail(i, "second flatten");
        trace.pre_flatten_map = std::make_pair(cur[1], cur[2]);
        cur = {shape_size(cur)};
        trace.flat_dim = cur[0];
        spatial = false;
        break;
      case LayerKind::kConcatAux:
        if (spatial) fail(i, "concat-aux before flatten");
        cur = {cur[0] + aux_width};
        break;
      case LayerKind::kFc:
        if (spatial) fail(i, "fully connected layer before flatten");
        if (l.out_dim == 0) fail(i, "zero output width");
        row.parameter_count = l.out_dim * cur[0] + l.out_dim;
        cur = {l.out_dim};
        break;
      case LayerKind::kRelu:
      case LayerKind::kSigmoid:
        break;
    }
    row.out_shape = cur;
    row.receptive_field_t = rf_t;
    row.receptive_field_f = rf_f;
    trace.total_parameters += row.parameter_count;
    trace.rows.push_back(std::move(row));
  }
  if (spatial) throw ShapeError(spec.name + ": no flatten before the output layer");
  ShapeTraceRow out{spec.layers.size(), "output fc " + std::to_string(spec.n_states), cur,
                    {spec.n_states}, spec.n_states * cur[0] + spec.n_states, rf_t, rf_f};
  trace.total_parameters += out.parameter_count;
  trace.rows.push_back(std::move(out));
  return trace;
}

inline std::string format_trace(const ArchitectureSpec& spec, const ShapeTrace& trace) {
  std::ostringstream os;
  os << "# " << spec.name << "  input " << shape_string(spec.input_shape) << "  conv layers "
     << spec.conv_layers() << "  parameters " << trace.total_parameters << '\n';
  os << "layer\tdescription\tin\tout\tparams\trf_t\trf_f\n";
  for (const auto& r : trace.rows)
    os << r.layer << '\t' << r.description << '\t' << shape_string(r.in_shape) << '\t'
       << shape_string(r.out_shape) << '\t' << r.parameter_count << '\t' << r.receptive_field_t
       << '\t' << r.receptive_field_f << '\n';
  return os.str();
}

/// Receptive field of the last convolution layer, or (1,1) without convs.
inline std::pair<std::size_t, std::size_t> last_conv_receptive_field(
    const ArchitectureSpec& spec, const ShapeTrace& trace) {
  std::pair<std::size_t, std::size_t> rf{1, 1};
  for (const auto& r : trace.rows)
    if (r.layer < spec.layers.size() && spec.layers[r.layer].kind == LayerKind::kConv)
      rf = {r.receptive_field_t, r.receptive_field_f};
  return rf;
}

// ---------------------------------------------------------------------------
// Structural rules

struct Violation {
  std::string rule;
  std::size_t layer;  // SIZE_MAX for whole-network rules
  std::string message;
};

inline constexpr std::size_t kWholeNetwork = static_cast<std::size_t>(-1);

inline std::string format_violation(const Violation& v) {
  std::ostringstream os;
  os << "[" << v.rule << "] ";
  if (v.layer != kWholeNetwork) os << "layer " << v.layer << ": ";
  os << v.message;
  return os.str();
}

/// Empty result means the spec satisfies every rule for its family. The
/// channel schedule allowed for VDCNNs is {base, 2 base, 4 base}.
inline std::vector<Violation> validate(const ArchitectureSpec& spec, std::size_t channel_base = 64) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].overlapping())
      out.push_back({"non-overlapping pooling", i,
                     "pool stride must equal its window; only non-overlapping pooling is used"});

  std::optional<ShapeTrace> trace;
  try {
    trace = derive_shapes(spec);
  } catch (const Error& e) {
    if (out.empty()) out.push_back({"shape", kWholeNetwork, e.what()});
  }
  if (spec.family != Family::kVdcnn) return out;

  std::size_t convs_since_pool = 0, last_maps = 0;
  const std::size_t allowed[] = {channel_base, 2 * channel_base, 4 * channel_base};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerSpec* next = i + 1 < spec.layers.size() ? &spec.layers[i + 1] : nullptr;
    switch (l.kind) {
      case LayerKind::kConv:
        ++convs_since_pool;
        if ((l.kt != 1 && l.kt != 3) || (l.kf != 1 && l.kf != 3))
          out.push_back({"filter size", i,
                         "filter " + std::to_string(l.kt) + "x" + std::to_string(l.kf) +
                             " not in {3x3, 1x3, 3x1}"});
        if (std::find(std::begin(allowed), std::end(allowed), l.out_maps) == std::end(allowed))
          out.push_back({"channel schedule", i,
                         std::to_string(l.out_maps) + " maps not drawn from {" +
                             std::to_string(allowed[0]) + "," + std::to_string(allowed[1]) + "," +
                             std::to_string(allowed[2]) + "}"});
        else if (l.out_maps < last_maps)
          out.push_back({"channel schedule", i, "feature-map count decreases"});
        last_maps = std::max(last_maps, l.out_maps);
        if (!next || next->kind != LayerKind::kRelu)
          out.push_back({"activation", i, "hidden convolution must be followed by relu"});
        break;
      case LayerKind::kPool:
        if (!((l.pt == 1 && l.pf == 2) || (l.pt == 2 && l.pf == 2)))
          out.push_back({"pool size", i,
                         "pool " + std::to_string(l.pt) + "x" + std::to_string(l.pf) +
                             " not in {1x2, 2x2}"});
        if (convs_since_pool < 2)
          out.push_back({"pool placement", i, "pooling must follow at least two convolutions"});
        convs_since_pool = 0;
        break;
      case LayerKind::kFc:
        if (!next || next->kind != LayerKind::kRelu)
          out.push_back({"activation", i, "hidden fully connected layer must be followed by relu"});
        break;
      case LayerKind::kSigmoid:
        out.push_back({"activation", i, "VDCNN hidden units use relu"});
        break;
      default:
        break;
    }
  }
  if (spec.fc_hidden_layers() != 4)
    out.push_back({"fc count", kWholeNetwork,
                   std::to_string(spec.fc_hidden_layers()) +
                       " fully connected hidden layers; exactly 4 are required"});
  if (trace && trace->pre_flatten_map) {
    const auto [t, f] = *trace->pre_flatten_map;
    const bool ok = (t == 1 && f >= 1 && f <= 3) || (t == 2 && f == 2);
    if (!ok)
      out.push_back({"final map", kWholeNetwork,
                     "pre-flatten map " + std::to_string(t) + "x" + std::to_string(f) +
                         " not in {1x1, 1x2, 1x3, 2x2}"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Catalog

/// Widths for catalog construction. Defaults are the full-size networks; desk
/// runs shrink both while keeping the 1:2:4 channel ratio.
struct CatalogOptions {
  std::size_t channel_base = 64;
  std::size_t fc_width = 2048;
  std::size_t n_states = 16;
};

namespace detail {

struct SpecBuilder {
  ArchitectureSpec spec;

  SpecBuilder& conv(std::size_t maps, std::size_t kt, std::size_t kf, std::size_t pt = 0,
                    std::size_t pf = 0, LayerKind act = LayerKind::kRelu) {
    spec.layers.push_back(LayerSpec::conv(maps, kt, kf, pt, pf));
    spec.layers.push_back(LayerSpec::of(act));
    return *this;
  }
  SpecBuilder& pool(std::size_t pt, std::size_t pf, bool trunc = false) {
    spec.layers.push_back(LayerSpec::pool(pt, pf, trunc));
    return *this;
  }
  SpecBuilder& head(std::size_t n_fc, std::size_t width, LayerKind act = LayerKind::kRelu) {
    spec.layers.push_back(LayerSpec::of(LayerKind::kFlatten));
    for (std::size_t i = 0; i < n_fc; ++i) {
      spec.layers.push_back(LayerSpec::fc(width));
      spec.layers.push_back(LayerSpec::of(act));
    }
    return *this;
  }
};

inline SpecBuilder start(std::string name, Family family, Shape input, std::size_t n_states) {
  SpecBuilder b;
  b.spec.name = std::move(name);
  b.spec.family = family;
  b.spec.input_shape = std::move(input);
  b.spec.n_states = n_states;
  return b;
}

}  // namespace detail

inline std::vector<ArchitectureSpec> catalog(const CatalogOptions& o = {}) {
  using detail::start;
  const std::size_t c1 = o.channel_base, c2 = 2 * o.channel_base, c3 = 4 * o.channel_base;
  const std::size_t s = o.n_states, w = o.fc_width;
  std::vector<ArchitectureSpec> out;

  // Baselines: 6x sigmoid MLP; two-layer CNN (9x9 + 1x3 pool, 3x4) with four
  // sigmoid FC layers. Both read 3 maps (static, delta, delta-delta).
  out.push_back(start("dnn", Family::kDnn, {3, 11, 40}, s).head(6, w, LayerKind::kSigmoid).spec);
  out.push_back(start("cnn", Family::kCnn, {3, 11, 40}, s)
                    .conv(c3, 9, 9, 0, 0, LayerKind::kSigmoid)
                    .pool(1, 3, true)
                    .conv(c3, 3, 4, 0, 0, LayerKind::kSigmoid)
                    .head(4, w, LayerKind::kSigmoid)
                    .spec);

  // vd6: time 11->1 via five 3-tall convs, frequency 40->3 with two pools.
  out.push_back(start("vd6", Family::kVdcnn, {1, 11, 40}, s)
                    .conv(c1, 3, 3).conv(c1, 3, 3).pool(1, 2)
                    .conv(c2, 3, 3).conv(c2, 3, 3).pool(1, 2)
                    .conv(c3, 3, 3).conv(c3, 1, 3)
                    .head(4, w).spec);

  // t-ext: 17-frame context, eight 3-tall convs.
  out.push_back(start("t-ext", Family::kVdcnn, {1, 17, 40}, s)
                    .conv(c1, 3, 3).conv(c1, 3, 3).pool(1, 2)
                    .conv(c2, 3, 3).conv(c2, 3, 3).conv(c2, 3, 3)
                    .conv(c2, 3, 3).conv(c2, 3, 3).conv(c2, 3, 3).pool(1, 2)
                    .head(4, w).spec);

  // f-ext: 64 mel bins, ten convs, only the first five are 3-tall.
  out.push_back(start("f-ext", Family::kVdcnn, {1, 11, 64}, s)
                    .conv(c1, 3, 3).conv(c1, 3, 3).pool(1, 2)
                    .conv(c2, 3, 3).conv(c2, 3, 3).conv(c2, 3, 3).conv(c2, 1, 3).pool(1, 2)
                    .conv(c3, 1, 3).conv(c3, 1, 3).conv(c3, 1, 3).conv(c3, 1, 3)
                    .head(4, w).spec);

  // vd10: 17x64, eight 3-tall convs, pools after conv2 and conv6.
  out.push_back(start("vd10", Family::kVdcnn, {1, 17, 64}, s)
                    .conv(c1, 3, 3).conv(c1, 3, 3).pool(1, 2)
                    .conv(c2, 3, 3).conv(c2, 3, 3).conv(c2, 3, 3).conv(c2, 3, 3).pool(1, 2)
                    .conv(c3, 3, 3).conv(c3, 3, 3).conv(c3, 1, 3).conv(c3, 1, 3)
                    .head(4, w).spec);

  // vd10-tpool: both pools 2x2 (truncating) plus two 3x1 time convs ahead of
  // the first pool; final map stays 1x3.
  out.push_back(start("vd10-tpool", Family::kVdcnn, {1, 17, 64}, s)
                    .conv(c1, 3, 3).conv(c1, 3, 3).conv(c1, 3, 1).conv(c1, 3, 1).pool(2, 2, true)
                    .conv(c2, 3, 3).conv(c2, 1, 3).conv(c2, 1, 3).conv(c2, 1, 3).pool(2, 2, true)
                    .conv(c3, 1, 3).conv(c3, 1, 3).conv(c3, 1, 3).conv(c3, 1, 3)
                    .head(4, w).spec);

  // vd10-fpad: frequency padded everywhere, five frequency pools 64->2.
  out.push_back(start("vd10-fpad", Family::kVdcnn, {1, 17, 64}, s)
                    .conv(c1, 3, 3, 0, 1).conv(c1, 3, 3, 0, 1).pool(1, 2)
                    .conv(c2, 3, 3, 0, 1).conv(c2, 3, 3, 0, 1).pool(1, 2)
                    .conv(c3, 3, 3, 0, 1).conv(c3, 3, 3, 0, 1).pool(1, 2)
                    .conv(c3, 3, 3, 0, 1).conv(c3, 3, 3, 0, 1).pool(1, 2)
                    .conv(c3, 1, 3, 0, 1).conv(c3, 1, 3, 0, 1).pool(1, 2)
                    .head(4, w).spec);

  // vd10-fpad-tpad: both axes padded, 2x2 pools x3 then 1x2 x2.
  const auto fpad_tpad = [&](std::string name, std::size_t maps) {
    return start(std::move(name), Family::kVdcnn, {maps, 17, 64}, s)
        .conv(c1, 3, 3, 1, 1).conv(c1, 3, 3, 1, 1).pool(2, 2, true)
        .conv(c2, 3, 3, 1, 1).conv(c2, 3, 3, 1, 1).pool(2, 2, true)
        .conv(c3, 3, 3, 1, 1).conv(c3, 3, 3, 1, 1).pool(2, 2, true)
        .conv(c3, 3, 3, 1, 1).conv(c3, 3, 3, 1, 1).pool(1, 2)
        .conv(c3, 3, 3, 1, 1).conv(c3, 3, 3, 1, 1).pool(1, 2)
        .head(4, w).spec;
  };
  out.push_back(fpad_tpad("vd10-fpad-tpad", 1));
  out.push_back(fpad_tpad("vd10-fpad-tpad-3map", 3));
  return out;
}

inline ArchitectureSpec find_architecture(const std::string& name, const CatalogOptions& o = {}) {
  for (auto& s : catalog(o))
    if (s.name == name) return s;
  throw DataError("unknown architecture '" + name + "'");
}

}  // namespace vdcnn
