#pragma once

#include <vector>

#include "sci/tensor.hpp"

namespace sci {

/// Zero-norm vector where a direction is required (cosine, projection,
/// normalization).
class DegenerateVectorError : public ContractError {
public:
    explicit DegenerateVectorError(const std::string& msg) : ContractError(msg) {}
};

// -- structural ---------------------------------------------------------

Tensor transpose(const Tensor& a);                       // [m×n] -> [n×m]
Tensor row(const Tensor& a, int i);                      // [m×n] -> [n]
Tensor stack_rows(const std::vector<Tensor>& rows);      // k × [n] -> [k×n]
Tensor slice_cols(const Tensor& a, int start, int len);  // [m×n] -> [m×len]
Tensor concat_cols(const std::vector<Tensor>& parts);    // k × [m×nᵢ] -> [m×Σnᵢ]
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids); // [V×d], L ids -> [L×d]
Tensor detach(const Tensor& a);                          // constant copy, cuts the tape

// -- elementwise / broadcast --------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, float s);
Tensor scale_by(const Tensor& a, const Tensor& s);       // s scalar tensor, grads to both
Tensor add_rowvec(const Tensor& a, const Tensor& v);     // [m×n] + [n] per row
Tensor add_colvec(const Tensor& a, const Tensor& v);     // [m×n] + [m] per column
Tensor mul_rowvec(const Tensor& a, const Tensor& v);     // [m×n] ⊙ [n] per row
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor gelu(const Tensor& a);                            // tanh approximation (smooth)

// -- reductions ----------------------------------------------------------

Tensor sum(const Tensor& a);        // -> scalar
Tensor mean_all(const Tensor& a);   // -> scalar
Tensor mean_rows(const Tensor& a);  // [m×n] -> [n], mean over rows
Tensor row_sums(const Tensor& a);   // [m×n] -> [m]

// -- linear algebra -------------------------------------------------------

/// [m×k]·[k×n] -> [m×n]; ShapeError names both operand shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor dot(const Tensor& a, const Tensor& b);            // 1-D · 1-D -> scalar
/// ⟨a,b⟩/(‖a‖‖b‖); DegenerateVectorError on a zero-norm input.
Tensor cosine_sim(const Tensor& a, const Tensor& b);
/// Rows scaled to unit L2 norm; DegenerateVectorError on a zero row.
Tensor l2_normalize_rows(const Tensor& a);
Tensor l2_normalize(const Tensor& a);                    // 1-D convenience

// -- normalization / activations over the last axis ----------------------

/// Max-subtraction softmax along `axis`; each slice sums to 1.
Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);
/// Normalize the last axis to zero mean / unit variance, then scale+shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// -- losses ---------------------------------------------------------------

/// Mean over rows of -Σ_c targets·log softmax(logits). Targets are treated
/// as constants (no gradient); each target row must sum to 1.
Tensor cross_entropy(const Tensor& logits, const Tensor& targets);

} // namespace sci
