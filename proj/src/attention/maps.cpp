#include "sit/attention/maps.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "sit/errors.hpp"

namespace sit::attention {

namespace {

using Dense = Eigen::MatrixXd;

void check_complete(const model::AttentionRecord& record, std::size_t head) {
  const auto s = record.sequence_length();
  if (record.layers.empty()) throw StateError("attention record is empty; run a recording forward pass first");
  if (record.expected_layers != 0 && record.layers.size() != record.expected_layers)
    throw StateError("attention record holds " + std::to_string(record.layers.size()) + " of " +
                     std::to_string(record.expected_layers) + " layers");
  for (std::size_t l = 0; l < record.layers.size(); ++l) {
    const auto& heads = record.layers[l];
    if (head >= heads.size())
      throw StateError("layer " + std::to_string(l) + " has no head " + std::to_string(head));
    if (heads[head].shape() != ad::Shape{s, s})
      throw StateError("layer " + std::to_string(l) + " attention is " + heads[head].shape().str() +
                       ", expected " + std::to_string(s) + "x" + std::to_string(s));
  }
}

}  // namespace

std::vector<double> rollout_row(const model::AttentionRecord& record, std::size_t head) {
  check_complete(record, head);
  const auto s = static_cast<Eigen::Index>(record.sequence_length());
  // Only the regression-token row is needed: r = e_0^T A~_L ... A~_1.
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(s);
  r(0) = 1.0;
  for (std::size_t l = record.layers.size(); l-- > 0;) {
    Dense a = 0.5 * (record.layers[l][head].mat() + Dense::Identity(s, s));
    a.array().colwise() /= a.rowwise().sum().array();
    r = r * a;
  }
  return {r.data(), r.data() + s};
}

std::vector<double> rollout(const model::AttentionRecord& record, std::size_t head) {
  const auto row = rollout_row(record, head);
  return {row.begin() + 1, row.begin() + 1 + static_cast<std::ptrdiff_t>(record.patch_count)};
}

std::vector<double> patches_to_vertices(std::span<const double> patch_weights, const geometry::PatchTable& table) {
  if (patch_weights.size() != table.patch_count)
    throw DataError("got " + std::to_string(patch_weights.size()) + " patch weights for a table of " +
                    std::to_string(table.patch_count) + " patches");
  // incremental mean: exact whenever all contributions are equal
  std::vector<double> mean(table.mesh_vertex_count, 0.0);
  std::vector<std::uint32_t> count(table.mesh_vertex_count, 0);
  for (std::size_t p = 0; p < table.patch_count; ++p)
    for (auto v : table.patch(p)) mean[v] += (patch_weights[p] - mean[v]) / ++count[v];
  for (std::size_t v = 0; v < mean.size(); ++v)
    if (count[v] == 0) throw DataError("vertex " + std::to_string(v) + " lies in no patch");
  return mean;
}

std::vector<double> threshold_map(std::span<const double> map, double q) {
  if (!(q >= 0 && q < 1)) throw BoundsError("threshold quantile must lie in [0, 1)");
  std::vector<double> out(map.begin(), map.end());
  if (out.empty()) return out;
  const auto n = out.size();
  // guard against (1 - q) n landing a rounding error above an integer
  const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil((1.0 - q) * n - 1e-9)), 1, n);
  std::vector<double> sorted = out;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n - keep), sorted.end());
  const double cut = sorted[n - keep];
  for (auto& v : out)
    if (v < cut) v = 0.0;
  return out;
}

void VertexAttentionMap::validate() const {
  if (values.size() != heads * vertex_count) throw DataError("attention map size does not match heads x vertices");
  for (double v : values)
    if (!std::isfinite(v) || v < 0) throw DataError("attention map entries must be finite and non-negative");
}

VertexAttentionMap vertex_attention(const model::AttentionRecord& record, const geometry::PatchTable& table) {
  if (record.layers.empty()) throw StateError("attention record is empty");
  const auto heads = record.layers.front().size();
  VertexAttentionMap map(heads, table.mesh_vertex_count);
  map.first_layer = 0;
  map.last_layer = record.layers.size() - 1;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto v = patches_to_vertices(rollout(record, h), table);
    std::copy(v.begin(), v.end(), map.head(h).begin());
  }
  return map;
}

VertexAttentionMap threshold_heads(const VertexAttentionMap& map, double q) {
  auto out = map;
  for (std::size_t h = 0; h < map.heads; ++h) {
    const auto t = threshold_map(map.head(h), q);
    std::copy(t.begin(), t.end(), out.head(h).begin());
  }
  return out;
}

VertexAttentionMap average_maps(std::span<const VertexAttentionMap> maps) {
  if (maps.empty()) throw DataError("no attention maps to average");
  auto out = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (maps[i].heads != out.heads || maps[i].vertex_count != out.vertex_count)
      throw ShapeError("attention maps differ in shape");
    for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += maps[i].values[k];
  }
  for (auto& v : out.values) v /= static_cast<double>(maps.size());
  if (maps.size() > 1) out.subject = "average";
  return out;
}

geometry::SurfaceSignal to_signal(const VertexAttentionMap& map) {
  geometry::SurfaceSignal sig(map.vertex_count, map.heads);
  for (std::size_t h = 0; h < map.heads; ++h) {
    sig.channel_names.push_back("head" + std::to_string(h));
    for (std::size_t v = 0; v < map.vertex_count; ++v) sig.at(v, h) = map.head(h)[v];
  }
  return sig;
}

}  // namespace sit::attention
