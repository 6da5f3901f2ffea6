//! Prints the first-child/next-sibling decoding path to every node of a
//! small expression tree.

use hlm::tree::{Ast, TransitionKind};

fn main() {
    // if (x) { y = x + 1; }
    let ast = Ast::build([
        ("IfStatement", None),
        ("Name", Some(0)),
        ("x", Some(1)),
        ("Block", Some(0)),
        ("Assign", Some(3)),
        ("y", Some(4)),
        ("+", Some(4)),
        ("x", Some(6)),
        ("1", Some(6)),
    ])
    .expect("valid tree");

    for id in ast.node_ids() {
        let path = ast.decoding_path(id).expect("node exists");
        let steps: Vec<String> = path
            .transitions
            .iter()
            .map(|t| match t.kind {
                TransitionKind::Initial => "start".to_string(),
                TransitionKind::FirstChild => format!("child({})", ast.token(t.target)),
                TransitionKind::NextSibling => format!("sibling({})", ast.token(t.target)),
            })
            .collect();
        println!("{:>12}  {}", ast.token(id), steps.join(" -> "));
    }
}
