//! Why train a ranker with a rank loss instead of cross-entropy?
//!
//! Cross-entropy compares score *values* to the target distribution, so a
//! prediction with the wrong ordering can score better than one with the
//! right ordering. The pairwise rank loss and NDCG both track the ordering.
//!
//! Run with `cargo run --example rank_loss_vs_cross_entropy`.

use navis::loss::{
    cross_entropy, lambda_loss, margin_reg, ndcg_at_k, rank_permutation, RankOptions,
    RankingContext,
};

fn main() {
    let y = [0.4, 0.35, 0.25];
    let s_right = [0.8, 0.15, 0.05]; // same ordering as y, peaked values
    let s_wrong = [0.35, 0.4, 0.25]; // values close to y, items 0/1 swapped

    println!("target y        = {y:?}   ordering {:?}", rank_permutation(&y));
    for (name, s) in [("s_right", &s_right), ("s_wrong", &s_wrong)] {
        let options = RankOptions::default();
        let ctx = RankingContext::build(s, &y, options).unwrap();
        println!(
            "{name} = {s:?}  ordering {:?}\n  cross-entropy {:.4}   rank loss {:.4}   \
             margin reg {:.4}   ndcg@3 {:.4}",
            rank_permutation(s),
            cross_entropy(s, &y).unwrap(),
            lambda_loss(s, &y, &ctx).unwrap(),
            margin_reg(s, &y, &ctx, 1e-3).unwrap(),
            ndcg_at_k(s, &y, 3).unwrap(),
        );
    }

    println!(
        "\nCross-entropy prefers the wrongly ordered s_wrong (lower value), \
         while the rank loss and NDCG both prefer s_right."
    );
}
