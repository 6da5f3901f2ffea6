//! Compares tape gradients of each model's loss with central differences.

use hlm::autodiff::gradient_pairs;
use hlm::corpus::Token;
use hlm::model::{Model, ModelKind};
use hlm::tree::Tree;

fn main() {
    let tree = Tree::from_parent_links(
        [(1, None), (2, Some(0)), (3, Some(1)), (4, Some(1)), (2, Some(0)), (0, Some(4))].map(|(t, p)| (Token::known(t), p)),
    )
    .expect("valid tree");

    for kind in ModelKind::ALL {
        let model = Model::new(kind, 5, 4, 1).expect("valid shape");
        let coords = gradient_pairs(model.params(), |tape| model.loss_on(tape, &tree).expect("shapes agree"), 1e-5);
        let worst = coords.iter().map(|c| c.rel_error()).fold(0.0, f64::max);
        let abs = coords.iter().map(|c| (c.analytic - c.numeric).abs()).fold(0.0, f64::max);
        println!("{:>4}: {} coordinates, max rel error {worst:.2e}, max abs error {abs:.2e}", kind.to_string(), coords.len());
    }
}
