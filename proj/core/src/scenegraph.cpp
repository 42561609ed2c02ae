#include "compad/scenegraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

namespace compad {

EdgeList build_edge_list(Topology topology, const std::vector<int>& agent_labels) {
  EdgeList edges;
  if (topology == Topology::SceneOnly) {
    edges.node_count = 1;
    edges.pairs.emplace_back(0, 0);
    return edges;
  }
  const int n = static_cast<int>(agent_labels.size());
  edges.node_count = n + 1;
  for (int i = 0; i <= n; ++i) edges.pairs.emplace_back(i, i);
  switch (topology) {
    case Topology::Star:
      for (int j = 1; j <= n; ++j) {
        edges.pairs.emplace_back(0, j);
        edges.pairs.emplace_back(j, 0);
      }
      break;
    case Topology::StarSameLabel:
      for (int j = 1; j <= n; ++j) {
        edges.pairs.emplace_back(0, j);
        edges.pairs.emplace_back(j, 0);
      }
      for (int j = 1; j <= n; ++j) {
        for (int k = j + 1; k <= n; ++k) {
          if (agent_labels[j - 1] == agent_labels[k - 1]) {
            edges.pairs.emplace_back(j, k);
            edges.pairs.emplace_back(k, j);
          }
        }
      }
      break;
    case Topology::FullyConnected:
      for (int i = 0; i <= n; ++i) {
        for (int j = i + 1; j <= n; ++j) {
          edges.pairs.emplace_back(i, j);
          edges.pairs.emplace_back(j, i);
        }
      }
      break;
    case Topology::SceneOnly:
      break;  // handled above
  }
  return edges;
}

void validate_edge_list(const EdgeList& edges) {
  std::set<std::pair<int, int>> seen;
  std::vector<bool> has_self(edges.node_count, false);
  for (const auto& [u, v] : edges.pairs) {
    if (u < 0 || v < 0 || u >= edges.node_count || v >= edges.node_count) {
      throw ValidationError("EdgeList: index out of range in pair (" + std::to_string(u) + "," +
                            std::to_string(v) + ")");
    }
    if (!seen.insert({u, v}).second) {
      throw ValidationError("EdgeList: duplicate pair (" + std::to_string(u) + "," + std::to_string(v) + ")");
    }
    if (u == v) has_self[u] = true;
  }
  for (int i = 0; i < edges.node_count; ++i) {
    if (!has_self[i]) throw ValidationError("EdgeList: missing self-loop on node " + std::to_string(i));
  }
  for (const auto& [u, v] : edges.pairs) {
    if (!seen.count({v, u})) {
      throw ValidationError("EdgeList: pair (" + std::to_string(u) + "," + std::to_string(v) +
                            ") has no reverse");
    }
  }
}

Neighborhoods Neighborhoods::build(const EdgeList& edges) {
  Neighborhoods nbrs;
  std::vector<int> degree(edges.node_count, 0);
  for (const auto& [u, v] : edges.pairs) {
    if (u < 0 || u >= edges.node_count || v < 0 || v >= edges.node_count) {
      throw ValidationError("EdgeList: index out of range");
    }
    ++degree[u];
  }
  nbrs.offsets.assign(edges.node_count + 1, 0);
  for (int i = 0; i < edges.node_count; ++i) {
    if (degree[i] == 0) throw Error("internal: node " + std::to_string(i) + " has an empty neighbourhood");
    nbrs.offsets[i + 1] = nbrs.offsets[i] + degree[i];
  }
  nbrs.targets.resize(edges.pairs.size());
  std::vector<int> cursor(nbrs.offsets.begin(), nbrs.offsets.end() - 1);
  for (const auto& [u, v] : edges.pairs) nbrs.targets[cursor[u]++] = v;
  return nbrs;
}

namespace {

double glorot_limit(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

Matrix glorot_matrix(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
  const double limit = glorot_limit(fan_in, fan_out);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.uniform(-limit, limit);
  return m;
}

}  // namespace

GatLayerParams GatLayerParams::init(int heads, int in_dim, int out_dim, Rng& rng, double slope) {
  if (heads < 1) throw ConfigError("GatLayerParams: head count must be >= 1, got " + std::to_string(heads));
  GatLayerParams p;
  p.leaky_slope = slope;
  p.transforms.reserve(heads);
  p.attentions.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    p.transforms.emplace_back(glorot_matrix(out_dim, in_dim, in_dim, out_dim, rng));
    p.attentions.emplace_back(glorot_matrix(2 * out_dim, 1, 2 * out_dim, 1, rng));
  }
  return p;
}

Matrix gat_layer_forward(const Matrix& features, const EdgeList& edges, const GatLayerParams& params) {
  const Neighborhoods nbrs = Neighborhoods::build(edges);
  return gat_layer_forward(features, nbrs, params, nullptr);
}

Matrix gat_layer_forward(const Matrix& features, const Neighborhoods& nbrs, const GatLayerParams& params,
                         GatLayerCache* cache) {
  const int n = features.rows();
  if (n != nbrs.node_count()) {
    throw DimensionError("gat_layer_forward: " + std::to_string(n) + " feature rows vs " +
                         std::to_string(nbrs.node_count()) + " graph nodes");
  }
  if (features.cols() != params.in_dim()) {
    throw DimensionError("gat_layer_forward: feature dim " + std::to_string(features.cols()) +
                         " vs transform input dim " + std::to_string(params.in_dim()));
  }
  const int d = params.out_dim();
  const int num_heads = params.heads();
  const size_t num_edges = nbrs.targets.size();
  if (cache) {
    cache->input = features;
    cache->heads.assign(num_heads, GatHeadCache{});
  }

  Matrix out(n, d);
  std::vector<double> scores(num_edges), coeffs(num_edges);
  for (int h = 0; h < num_heads; ++h) {
    const Matrix& w = params.transforms[h].value;
    const std::vector<double>& a = params.attentions[h].value.data();
    Matrix z = matmul(features, transpose(w));

    // Per-node projections of z onto the two attention halves: the logit of
    // edge (i, j) is lrelu(a1.z_i + a2.z_j).
    std::vector<double> src_term(n, 0.0), dst_term(n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) {
        src_term[i] += a[k] * z(i, k);
        dst_term[i] += a[d + k] * z(i, k);
      }
    }
    for (int i = 0; i < n; ++i) {
      const auto slice = nbrs.of(i);
      for (size_t e = 0; e < slice.size(); ++e) {
        const double s = src_term[i] + dst_term[slice[e]];
        scores[nbrs.offsets[i] + e] = s;
      }
    }
    // Softmax over each neighbourhood, then the attention-weighted sum.
    for (int i = 0; i < n; ++i) {
      const auto slice = nbrs.of(i);
      const int base = nbrs.offsets[i];
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t e = 0; e < slice.size(); ++e) {
        const double activated = scores[base + e] > 0.0 ? scores[base + e] : scores[base + e] * params.leaky_slope;
        coeffs[base + e] = activated;
        mx = std::max(mx, activated);
      }
      double sum = 0.0;
      for (size_t e = 0; e < slice.size(); ++e) {
        coeffs[base + e] = std::exp(coeffs[base + e] - mx);
        sum += coeffs[base + e];
      }
      for (size_t e = 0; e < slice.size(); ++e) {
        coeffs[base + e] /= sum;
        const int j = slice[e];
        const double alpha = coeffs[base + e];
        for (int k = 0; k < d; ++k) out(i, k) += alpha * z(j, k);
      }
    }
    if (cache) {
      cache->heads[h].z = std::move(z);
      cache->heads[h].scores = scores;
      cache->heads[h].coeffs = coeffs;
    }
  }
  out *= 1.0 / num_heads;
  if (!out.all_finite()) throw NumericError("gat_layer_forward: non-finite output");
  if (cache) cache->output = out;
  return out;
}

void gat_layer_backward(const Matrix& upstream, const Neighborhoods& nbrs, const GatLayerCache& cache,
                        GatLayerParams& params, Matrix& input_grad) {
  const int n = cache.input.rows();
  const int d = params.out_dim();
  const int num_heads = params.heads();
  require_same_shape(input_grad, cache.input, "gat_layer_backward input_grad");
  if (upstream.rows() != n || upstream.cols() != d) {
    throw DimensionError("gat_layer_backward: upstream " + upstream.shape_string() + " vs layer output (" +
                         std::to_string(n) + "x" + std::to_string(d) + ")");
  }
  const double head_scale = 1.0 / num_heads;

  for (int h = 0; h < num_heads; ++h) {
    const GatHeadCache& hc = cache.heads[h];
    const std::vector<double>& a = params.attentions[h].value.data();
    std::vector<double>& da = params.attentions[h].grad.data();
    Matrix dz(n, d);

    for (int i = 0; i < n; ++i) {
      const auto slice = nbrs.of(i);
      const int base = nbrs.offsets[i];

      // Through the weighted sum y_i = sum_j alpha_ij z_j.
      std::vector<double> dalpha(slice.size());
      double weighted = 0.0;  // sum_k alpha_ik dalpha_ik, for the softmax jacobian
      for (size_t e = 0; e < slice.size(); ++e) {
        const int j = slice[e];
        double dot = 0.0;
        for (int k = 0; k < d; ++k) {
          const double g = upstream(i, k) * head_scale;
          dz(j, k) += hc.coeffs[base + e] * g;
          dot += hc.z(j, k) * g;
        }
        dalpha[e] = dot;
        weighted += hc.coeffs[base + e] * dot;
      }
      // Softmax then LeakyReLU, back to the raw scores.
      for (size_t e = 0; e < slice.size(); ++e) {
        const int j = slice[e];
        const double de = hc.coeffs[base + e] * (dalpha[e] - weighted);
        const double ds = hc.scores[base + e] > 0.0 ? de : de * params.leaky_slope;
        for (int k = 0; k < d; ++k) {
          dz(i, k) += ds * a[k];
          dz(j, k) += ds * a[d + k];
          da[k] += ds * hc.z(i, k);
          da[d + k] += ds * hc.z(j, k);
        }
      }
    }
    // z = x W1^T  =>  dW1 += dz^T x, dx += dz W1.
    params.transforms[h].grad += matmul(transpose(dz), cache.input);
    input_grad += matmul(dz, params.transforms[h].value);
  }
}

std::vector<Param*> SgatStackParams::params() {
  std::vector<Param*> out;
  for (GatLayerParams& layer : layers) {
    for (Param& p : layer.transforms) out.push_back(&p);
    for (Param& p : layer.attentions) out.push_back(&p);
  }
  out.push_back(&aggregate);
  return out;
}

SgatStackParams SgatStackParams::init(int feature_dim, int class_count, int head_dim, int scene_dim,
                                      ReadoutMode readout, Rng& rng) {
  if (class_count < 1) throw ConfigError("SgatStackParams: class count must be >= 1");
  if (head_dim < 1) throw ConfigError("SgatStackParams: head dim must be >= 1");
  if (scene_dim <= 0) scene_dim = class_count * head_dim;
  SgatStackParams p;
  p.readout = readout;
  const int head_counts[kSgatLayers] = {4, 4, class_count, class_count};
  int in_dim = feature_dim;
  for (int l = 0; l < kSgatLayers; ++l) {
    p.layers.push_back(GatLayerParams::init(head_counts[l], in_dim, head_dim, rng));
    in_dim = head_dim;
  }
  p.aggregate = Param(glorot_matrix(scene_dim, head_dim, head_dim, scene_dim, rng));
  return p;
}

Matrix node_features(const SceneSnippet& snippet, const EdgeList& edges) {
  const int feature_dim = static_cast<int>(snippet.scene_feature.size());
  if (edges.node_count == 1) {
    return Matrix(1, feature_dim, snippet.scene_feature);
  }
  if (edges.node_count != static_cast<int>(snippet.agents.size()) + 1) {
    throw DimensionError("node_features: edge list has " + std::to_string(edges.node_count) +
                         " nodes but snippet has " + std::to_string(snippet.agents.size()) + " agents");
  }
  Matrix nodes(edges.node_count, feature_dim);
  for (int k = 0; k < feature_dim; ++k) nodes(0, k) = snippet.scene_feature[k];
  for (size_t j = 0; j < snippet.agents.size(); ++j) {
    const AgentNode& agent = snippet.agents[j];
    if (static_cast<int>(agent.feature.size()) != feature_dim) {
      throw DimensionError("node_features: agent " + std::to_string(j) + " feature dim " +
                           std::to_string(agent.feature.size()) + " vs scene dim " +
                           std::to_string(feature_dim));
    }
    for (int k = 0; k < feature_dim; ++k) nodes(static_cast<int>(j) + 1, k) = agent.feature[k];
  }
  return nodes;
}

Matrix sgat_forward(const SceneSnippet& snippet, const EdgeList& edges, const SgatStackParams& params) {
  SgatCache cache;
  return sgat_forward(node_features(snippet, edges), edges, params, cache);
}

Matrix sgat_forward(const Matrix& nodes, const EdgeList& edges, const SgatStackParams& params,
                    SgatCache& cache) {
  cache.nbrs = Neighborhoods::build(edges);
  cache.layers.assign(params.layers.size(), GatLayerCache{});
  Matrix x = nodes;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    Matrix out = gat_layer_forward(x, cache.nbrs, params.layers[l], &cache.layers[l]);
    x = l + 1 < params.layers.size() ? leaky_relu(out, params.layers[l].leaky_slope) : std::move(out);
  }

  const int d = x.cols();
  Matrix pooled(d, 1);
  if (params.readout == ReadoutMode::Aggregated) {
    for (int i = 0; i < x.rows(); ++i) {
      for (int k = 0; k < d; ++k) pooled(k, 0) += x(i, k);
    }
    pooled *= 1.0 / x.rows();
  } else {
    for (int k = 0; k < d; ++k) pooled(k, 0) = x(0, k);
  }
  cache.pooled = pooled;
  return matmul(params.aggregate.value, pooled);
}

Matrix sgat_backward(const Matrix& upstream, const SgatCache& cache, SgatStackParams& params) {
  if (upstream.rows() != params.scene_dim() || upstream.cols() != 1) {
    throw DimensionError("sgat_backward: upstream " + upstream.shape_string() + " vs scene dim " +
                         std::to_string(params.scene_dim()));
  }
  if (cache.layers.size() != params.layers.size() || cache.pooled.empty()) {
    throw Error("sgat_backward: cache does not match params");
  }
  params.aggregate.grad += matmul(upstream, transpose(cache.pooled));
  const Matrix dpooled = matmul(transpose(params.aggregate.value), upstream);

  const int last = static_cast<int>(params.layers.size()) - 1;
  const int n = cache.layers[last].output.rows();
  const int d = cache.layers[last].output.cols();
  Matrix dx(n, d);
  if (params.readout == ReadoutMode::Aggregated) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) dx(i, k) = dpooled(k, 0) / n;
    }
  } else {
    for (int k = 0; k < d; ++k) dx(0, k) = dpooled(k, 0);
  }

  for (int l = last; l >= 0; --l) {
    Matrix input_grad(cache.layers[l].input.rows(), cache.layers[l].input.cols());
    gat_layer_backward(dx, cache.nbrs, cache.layers[l], params.layers[l], input_grad);
    dx = std::move(input_grad);
    if (l > 0) {
      dx = hadamard(dx, leaky_relu_grad(cache.layers[l - 1].output, params.layers[l - 1].leaky_slope));
    }
  }
  return dx;
}

}  // namespace compad
