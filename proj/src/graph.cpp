#include "adviris/graph.hpp"

#include <stdexcept>

namespace adviris::nn {

Var Graph::leaf(Tensor t, bool requires_grad, std::string label) {
    Node n;
    n.value = std::move(t);
    n.requires_grad = requires_grad;
    n.label = std::move(label);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Tensor value, std::vector<int> inputs, std::string label,
                  std::function<void(Graph&, int)> backward) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.label = std::move(label);
    n.backward = std::move(backward);
    for (int in : n.inputs) {
        if (in < 0 || in >= size())
            throw std::logic_error("Graph::record: input id out of range for " + n.label);
        if (node(in).requires_grad) n.requires_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Graph::Node& Graph::node(int id) const {
    if (id < 0 || id >= size()) throw std::logic_error("Graph: bad node id");
    return nodes_[static_cast<std::size_t>(id)];
}

Graph::Node& Graph::node(int id) {
    if (id < 0 || id >= size()) throw std::logic_error("Graph: bad node id");
    return nodes_[static_cast<std::size_t>(id)];
}

Tensor& Graph::grad_buffer(int id) {
    Node& n = node(id);
    if (!n.grad_live) {
        n.grad = Tensor(n.value.shape);
        n.grad_live = true;
    }
    return n.grad;
}

const Tensor& Graph::grad(Var x) {
    Node& n = node(x.id);
    if (!n.grad_live) {
        n.grad = Tensor(n.value.shape);
        n.grad_live = true;
    }
    return n.grad;
}

void Graph::backward(Var loss) {
    Node& ln = node(loss.id);
    if (ln.value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(ln.value.shape));
    grad_buffer(loss.id).v[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = node(id);
        if (!n.grad_live || !n.requires_grad) continue;
        if (n.backward) n.backward(*this, id);
    }
}

}  // namespace adviris::nn
