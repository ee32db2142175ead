#pragma once

#include <functional>
#include <string>
#include <vector>

#include "adviris/tensor.hpp"

namespace adviris::nn {

class Graph;

// Lightweight handle into a Graph's node arena.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape.  Ops append nodes in construction order, which is a
// topological order by definition; backward() walks it once in reverse.
// A Graph and its tensors belong to one thread; distinct Graphs are
// independent.
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;                    // allocated on first accumulation
        bool grad_live = false;         // grad buffer has been written
        bool requires_grad = false;
        std::vector<int> inputs;
        std::string label;
        // Pulls this node's grad and accumulates into the inputs' grads.
        std::function<void(Graph&, int)> backward;
    };

    Var leaf(Tensor t, bool requires_grad, std::string label = "leaf");

    // Used by ops; requires_grad is derived from the inputs.
    Var record(Tensor value, std::vector<int> inputs, std::string label,
               std::function<void(Graph&, int)> backward);

    const Tensor& value(Var x) const { return node(x.id).value; }
    bool requires_grad(Var x) const { return node(x.id).requires_grad; }

    // Gradient of the last backward() pass; zero tensor if the node was
    // never reached.
    const Tensor& grad(Var x);

    // Accumulate into a node's gradient buffer (no-op target check is the
    // caller's job: only call for inputs that require grad).
    Tensor& grad_buffer(int id);

    // dLoss/dTensor for every requires_grad tensor reachable from loss.
    // Fan-out accumulates additively.  loss must be scalar.
    void backward(Var loss);

    const Node& node(int id) const;
    Node& node(int id);
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    std::vector<Node> nodes_;
};

}  // namespace adviris::nn
