#pragma once

#include <span>
#include <utility>
#include <vector>

#include "compad/matrix.hpp"
#include "compad/numkit.hpp"
#include "compad/rng.hpp"

namespace compad {

enum class Topology { FullyConnected, Star, StarSameLabel, SceneOnly };
enum class ReadoutMode { Aggregated, Scene };

struct AgentNode {
  int label_id = 0;
  std::vector<double> feature;
};

// One local scene: the snippet-level feature plus one node per agent tube.
struct SceneSnippet {
  int snippet_index = 0;
  std::vector<double> scene_feature;
  std::vector<AgentNode> agents;
};

// Node-pair connectivity of a local scene graph, as a flat list of directed
// (source, target) tuples. Node 0 is the scene node, nodes 1..n the agents.
// Always symmetric and with a self-loop on every node.
struct EdgeList {
  int node_count = 0;
  std::vector<std::pair<int, int>> pairs;
};

EdgeList build_edge_list(Topology topology, const std::vector<int>& agent_labels);

// Throws if indices are out of range, a pair repeats, a self-loop is missing
// or symmetry is broken.
void validate_edge_list(const EdgeList& edges);

// CSR view of an EdgeList: neighbours of i are the targets of pairs (i, j).
struct Neighborhoods {
  std::vector<int> offsets;
  std::vector<int> targets;

  static Neighborhoods build(const EdgeList& edges);

  int node_count() const { return static_cast<int>(offsets.size()) - 1; }
  std::span<const int> of(int node) const {
    return {targets.data() + offsets[node], static_cast<size_t>(offsets[node + 1] - offsets[node])};
  }
};

// One multi-head attention layer. Every head owns a linear transform
// (out_dim x in_dim) and an attention vector (2*out_dim x 1); head outputs
// are averaged, so the layer output dimension equals out_dim.
struct GatLayerParams {
  std::vector<Param> transforms;
  std::vector<Param> attentions;
  double leaky_slope = kDefaultLeakySlope;

  int heads() const { return static_cast<int>(transforms.size()); }
  int in_dim() const { return transforms.front().value.cols(); }
  int out_dim() const { return transforms.front().value.rows(); }

  static GatLayerParams init(int heads, int in_dim, int out_dim, Rng& rng,
                             double slope = kDefaultLeakySlope);
};

struct GatHeadCache {
  Matrix z;                    // transformed node features, nodes x out_dim
  std::vector<double> scores;  // raw attention logits, one per directed edge (CSR order)
  std::vector<double> coeffs;  // softmax-normalised attention, same layout
};

struct GatLayerCache {
  Matrix input;
  std::vector<GatHeadCache> heads;
  Matrix output;  // mean over heads, before any inter-layer activation
};

Matrix gat_layer_forward(const Matrix& features, const EdgeList& edges, const GatLayerParams& params);
Matrix gat_layer_forward(const Matrix& features, const Neighborhoods& nbrs, const GatLayerParams& params,
                         GatLayerCache* cache);

// Accumulates parameter gradients and adds the input-feature gradient into
// input_grad (which must already have the input's shape).
void gat_layer_backward(const Matrix& upstream, const Neighborhoods& nbrs, const GatLayerCache& cache,
                        GatLayerParams& params, Matrix& input_grad);

inline constexpr int kSgatLayers = 4;

// The full 4-layer attention stack plus the aggregation matrix W2 that turns
// attended node features into one fixed-size scene embedding.
struct SgatStackParams {
  std::vector<GatLayerParams> layers;
  Param aggregate;  // W2, scene_dim x out_dim of the last layer
  ReadoutMode readout = ReadoutMode::Aggregated;

  int input_dim() const { return layers.front().in_dim(); }
  int scene_dim() const { return aggregate.value.rows(); }

  std::vector<Param*> params();

  // Head counts are {4, 4, class_count, class_count}; every layer maps to
  // head_dim features per node. scene_dim <= 0 selects the default
  // class_count * head_dim.
  static SgatStackParams init(int feature_dim, int class_count, int head_dim, int scene_dim,
                              ReadoutMode readout, Rng& rng);
};

struct SgatCache {
  Neighborhoods nbrs;
  std::vector<GatLayerCache> layers;
  Matrix pooled;  // readout vector before W2, out_dim x 1
};

// Stacks scene feature (row 0) and agent features into the node matrix the
// stack consumes; for a single-node edge list only the scene row is used.
Matrix node_features(const SceneSnippet& snippet, const EdgeList& edges);

// Returns the scene embedding as a scene_dim x 1 column.
Matrix sgat_forward(const SceneSnippet& snippet, const EdgeList& edges, const SgatStackParams& params);
Matrix sgat_forward(const Matrix& nodes, const EdgeList& edges, const SgatStackParams& params,
                    SgatCache& cache);

// upstream is scene_dim x 1. Accumulates into all stack params and returns
// the gradient with respect to the input node features.
Matrix sgat_backward(const Matrix& upstream, const SgatCache& cache, SgatStackParams& params);

}  // namespace compad
