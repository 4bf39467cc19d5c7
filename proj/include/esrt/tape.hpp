#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "esrt/tensor.hpp"

namespace esrt {

// Reverse-mode tape. Ops append nodes in execution order; backward() walks
// the list in reverse once, accumulating into per-node gradient slots, so
// every watched leaf receives its full gradient exactly once. One tape per
// training step, single-threaded.
template <typename T>
class GradTape {
public:
    // A node's backward maps the output gradient to one gradient per input.
    // Entries for inputs that don't need a gradient are default (invalid)
    // tensors and are skipped during accumulation.
    using BackwardFn = std::function<std::vector<Tensor<T>>(const Tensor<T>&)>;

    GradTape() : id_(next_id().fetch_add(1) + 1) {}

    uint64_t id() const { return id_; }
    size_t num_nodes() const { return nodes_.size(); }

    bool tracked(const Tensor<T>& t) const { return t.tape_id == id_ && t.node >= 0; }
    int node_of(const Tensor<T>& t) const { return tracked(t) ? t.node : -1; }

    // Register a leaf (trainable parameter or watched input). Idempotent for
    // a tensor already on this tape so shared weights accumulate into a
    // single slot.
    void watch(Tensor<T>& t, const std::string& name) {
        if (tracked(t)) return;
        Node node;
        node.fn = nullptr;
        t.node = int(nodes_.size());
        t.tape_id = id_;
        t.requires_grad = true;
        nodes_.push_back(std::move(node));
        leaves_.emplace_back(t.node, name);
        leaf_shapes_.push_back(t.shape());
    }

    int record(std::vector<int> inputs, BackwardFn fn) {
        Node node;
        node.inputs = std::move(inputs);
        node.fn = std::move(fn);
        nodes_.push_back(std::move(node));
        return int(nodes_.size()) - 1;
    }

    // Attach a freshly computed op result to the tape when any input is
    // tracked. `make_fn` is only invoked if recording actually happens.
    template <typename MakeFn>
    void record_result(Tensor<T>& out, std::initializer_list<const Tensor<T>*> ins,
                       MakeFn&& make_fn) {
        bool any = false;
        for (const Tensor<T>* t : ins) any = any || tracked(*t);
        if (!any) return;
        std::vector<int> ids;
        ids.reserve(ins.size());
        for (const Tensor<T>* t : ins) ids.push_back(node_of(*t));
        out.node = record(std::move(ids), make_fn());
        out.tape_id = id_;
        out.requires_grad = true;
    }

    // Gradients of a scalar root w.r.t. every watched leaf, keyed by leaf
    // name. Leaves the root does not depend on get zero gradients.
    std::map<std::string, Tensor<T>> backward(const Tensor<T>& root) const {
        if (!tracked(root)) throw TapeError("backward root was not produced on this tape");
        if (root.size() != 1) throw TapeError("backward root must be a scalar");

        std::vector<Tensor<T>> grads(nodes_.size());
        grads[size_t(root.node)] = Tensor<T>::full(root.shape(), T(1));

        for (int i = root.node; i >= 0; --i) {
            const Node& node = nodes_[size_t(i)];
            if (!grads[size_t(i)].valid() || !node.fn) continue;
            std::vector<Tensor<T>> gin = node.fn(grads[size_t(i)]);
            if (gin.size() != node.inputs.size())
                throw TapeError("backward rule returned wrong number of gradients");
            for (size_t j = 0; j < gin.size(); ++j) {
                int src = node.inputs[j];
                if (src < 0 || !gin[j].valid()) continue;
                accumulate(grads[size_t(src)], gin[j]);
            }
            grads[size_t(i)] = Tensor<T>();  // free as soon as consumed
        }

        std::map<std::string, Tensor<T>> out;
        for (size_t k = 0; k < leaves_.size(); ++k) {
            const auto& [node_id, name] = leaves_[k];
            Tensor<T>& g = grads[size_t(node_id)];
            out[name] = g.valid() ? g : Tensor<T>(leaf_shapes_[k]);
        }
        return out;
    }

private:
    struct Node {
        std::vector<int> inputs;
        BackwardFn fn;  // null for leaves
    };

    // Backward rules are allowed to return tensors that alias their input
    // gradient (reshape, add, ...), so accumulation never mutates in place;
    // a second contribution allocates a fresh sum.
    static void accumulate(Tensor<T>& slot, const Tensor<T>& g) {
        if (!slot.valid()) {
            slot = g;
            return;
        }
        if (slot.shape() != g.shape())
            throw TapeError("gradient shape mismatch during accumulation");
        Tensor<T> sum(slot.shape());
        T* dst = sum.data();
        const T* a = slot.data();
        const T* b = g.data();
        for (int64_t i = 0; i < sum.size(); ++i) dst[i] = a[i] + b[i];
        slot = sum;
    }

    static std::atomic<uint64_t>& next_id() {
        static std::atomic<uint64_t> counter{0};
        return counter;
    }

    uint64_t id_;
    std::vector<Node> nodes_;
    std::vector<std::pair<int, std::string>> leaves_;
    std::vector<Shape> leaf_shapes_;
};

}  // namespace esrt
