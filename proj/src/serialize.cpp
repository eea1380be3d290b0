#include "ebcobart/serialize.hpp"

namespace ebcobart {

namespace {

void append_preorder(const Tree& tree, std::int32_t i, nlohmann::json& out) {
  const TreeNode& n = tree.node(i);
  if (n.is_leaf()) {
    out.push_back({{"kind", "leaf"}, {"mu", n.mu}});
    return;
  }
  out.push_back({{"kind", "split"},
                 {"var", n.split.var_index},
                 {"cut", n.split.cut_value}});
  append_preorder(tree, n.left, out);
  append_preorder(tree, n.right, out);
}

std::int32_t read_preorder(const nlohmann::json& nodes, std::size_t& pos,
                           std::int32_t depth, std::vector<TreeNode>& arena) {
  if (pos >= nodes.size()) throw InputError("forest json: truncated node list");
  const nlohmann::json& n = nodes[pos++];
  const std::string kind = n.at("kind").get<std::string>();
  const auto self = static_cast<std::int32_t>(arena.size());
  arena.emplace_back();
  arena[self].depth = depth;
  if (kind == "leaf") {
    arena[self].mu = n.at("mu").get<double>();
    return self;
  }
  if (kind != "split")
    throw InputError("forest json: unknown node kind '" + kind + "'");
  arena[self].split.var_index = n.at("var").get<std::int32_t>();
  arena[self].split.cut_value = n.at("cut").get<double>();
  const std::int32_t left = read_preorder(nodes, pos, depth + 1, arena);
  const std::int32_t right = read_preorder(nodes, pos, depth + 1, arena);
  arena[self].left = left;
  arena[self].right = right;
  return self;
}

}  // namespace

nlohmann::json forest_to_json(const Forest& forest, const ResponseScaling& scaling) {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& t : forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    append_preorder(t, 0, nodes);
    trees.push_back(std::move(nodes));
  }
  return {{"version", 1},
          {"K", forest.trees.size()},
          {"sigma2", forest.sigma2},
          {"response_scaling", {{"min", scaling.min}, {"max", scaling.max}}},
          {"trees", std::move(trees)}};
}

Forest forest_from_json(const nlohmann::json& doc, ResponseScaling* scaling) {
  if (doc.at("version").get<int>() != 1)
    throw InputError("forest json: unsupported version");
  if (scaling) {
    scaling->min = doc.at("response_scaling").at("min").get<double>();
    scaling->max = doc.at("response_scaling").at("max").get<double>();
  }
  Forest forest;
  forest.sigma2 = doc.at("sigma2").get<double>();
  const nlohmann::json& trees = doc.at("trees");
  if (trees.size() != doc.at("K").get<std::size_t>())
    throw InputError("forest json: tree count does not match K");
  forest.trees.reserve(trees.size());
  for (const nlohmann::json& nodes : trees) {
    std::vector<TreeNode> arena;
    std::size_t pos = 0;
    read_preorder(nodes, pos, 0, arena);
    if (pos != nodes.size())
      throw InputError("forest json: trailing nodes after preorder walk");
    Tree t = Tree::from_nodes(std::move(arena));
    t.validate();
    forest.trees.push_back(std::move(t));
  }
  return forest;
}

}  // namespace ebcobart
