//! Grammar-driven random function trees.
//!
//! A grammar maps rule names to weighted productions. Expanding a rule
//! picks one production, emits a node labeled with the production's label,
//! and expands its child symbols left to right. Identifier leaves come from
//! named pools with Zipf-distributed ranks; a pool can restrict each tree
//! to a small random scope so names repeat within a function.
//!
//! Identifier renaming replaces each identifier leaf, independently with
//! probability `rename_fraction`, by a fresh name that no base pool
//! contains. Structure and renaming draw from separate generator streams,
//! so the same seed yields the same trees with or without renaming.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::{CorpusError, DEFAULT_MAX_NODES, DEFAULT_MIN_NODES};
use crate::tree::{Ast, TreeMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    /// Expand another rule.
    Rule(String),
    /// Expand a rule between `min` and `max` times (inclusive).
    Repeat { rule: String, min: usize, max: usize },
    /// A leaf drawn from an identifier pool.
    Ident(String),
    /// A leaf chosen uniformly from fixed tokens.
    Literal(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub label: String,
    #[serde(default)]
    pub children: Vec<Symbol>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierPool {
    /// Names are `{prefix}{rank}`; fresh names are `{prefix}_{n}`.
    pub prefix: String,
    pub size: usize,
    /// Zipf exponent over ranks.
    #[serde(default = "one")]
    pub zipf: f64,
    /// If set, each tree draws this many names from the pool and only uses
    /// those.
    #[serde(default)]
    pub scope: Option<usize>,
}

impl IdentifierPool {
    pub fn name(&self, rank: usize) -> String {
        format!("{}{}", self.prefix, rank)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    pub start: String,
    pub rules: BTreeMap<String, Vec<Production>>,
    pub pools: BTreeMap<String, IdentifierPool>,
    pub max_depth: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub seed: u64,
    #[serde(default)]
    pub rename_fraction: f64,
    /// Rejection-sampling attempts per tree before giving up.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Project name written into each tree's metadata.
    #[serde(default)]
    pub project: Option<String>,
}

fn default_attempts() -> usize {
    1000
}

impl GrammarConfig {
    /// Every name any pool can produce.
    pub fn identifier_pool(&self) -> BTreeSet<String> {
        self.pools.values().flat_map(|p| (0..p.size).map(|r| p.name(r))).collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rename_fraction(mut self, f: f64) -> Self {
        self.rename_fraction = f;
        self
    }

    pub fn with_bounds(mut self, min_nodes: usize, max_nodes: usize) -> Self {
        self.min_nodes = min_nodes;
        self.max_nodes = max_nodes;
        self
    }

    /// A Java-like method grammar with declarations, calls, conditionals
    /// and loops, sized to land mostly within the default node bounds.
    pub fn java_like() -> Self {
        use Symbol::*;
        let rule = |s: &str| Rule(s.to_string());
        let rep = |s: &str, min, max| Repeat { rule: s.to_string(), min, max };
        let id = |s: &str| Ident(s.to_string());
        let lit = |xs: &[&str]| Literal(xs.iter().map(|x| x.to_string()).collect());
        let p = |label: &str, children: Vec<Symbol>, weight: f64| Production { label: label.to_string(), children, weight };

        let mut rules = BTreeMap::new();
        rules.insert(
            "method".to_string(),
            vec![p("MethodDeclaration", vec![id("type"), id("method"), rule("params"), rule("body")], 1.0)],
        );
        rules.insert("params".to_string(), vec![p("Parameters", vec![rep("param", 0, 3)], 1.0)]);
        rules.insert("param".to_string(), vec![p("Parameter", vec![id("type"), id("var")], 1.0)]);
        rules.insert("body".to_string(), vec![p("Block", vec![rep("stmt", 6, 14)], 1.0)]);
        rules.insert("block".to_string(), vec![p("Block", vec![rep("stmt", 1, 4)], 1.0)]);
        rules.insert(
            "stmt".to_string(),
            vec![
                p("LocalVariable", vec![id("type"), id("var"), rule("expr")], 3.0),
                p("ExpressionStatement", vec![rule("call")], 3.0),
                p("Assignment", vec![id("var"), rule("expr")], 2.5),
                p("IfStatement", vec![rule("cond"), rule("block")], 1.5),
                p("IfStatement", vec![rule("cond"), rule("block"), rule("block")], 0.7),
                p("WhileStatement", vec![rule("cond"), rule("block")], 0.6),
                p("ForStatement", vec![rule("for_init"), rule("cond"), rule("update"), rule("block")], 0.8),
                p("ReturnStatement", vec![rule("expr")], 0.6),
            ],
        );
        rules.insert("for_init".to_string(), vec![p("LocalVariable", vec![lit(&["int"]), id("var"), rule("zero")], 1.0)]);
        rules.insert("zero".to_string(), vec![p("IntegerLiteral", vec![lit(&["0"])], 1.0)]);
        rules.insert("update".to_string(), vec![p("PostIncrement", vec![id("var")], 1.0)]);
        let mut conds: Vec<Production> =
            ["<", ">", "==", "!=", "<="].iter().map(|op| p(op, vec![rule("operand"), rule("expr")], 1.0)).collect();
        conds.push(p("&&", vec![rule("cond"), rule("cond")], 0.3));
        conds.push(p("MethodCall", vec![id("var"), id("method"), rule("args")], 0.6));
        rules.insert("cond".to_string(), conds);
        rules.insert(
            "expr".to_string(),
            vec![
                p("+", vec![rule("operand"), rule("operand")], 1.0),
                p("-", vec![rule("operand"), rule("operand")], 0.6),
                p("*", vec![rule("operand"), rule("expr")], 0.6),
                p("MethodCall", vec![id("var"), id("method"), rule("args")], 1.5),
                p("ObjectCreation", vec![id("type"), rule("args")], 0.6),
                p("NameExpr", vec![id("var")], 1.5),
                p("IntegerLiteral", vec![lit(&["0", "1", "2", "10", "100"])], 0.8),
                p("FieldAccess", vec![id("var"), id("field")], 0.8),
            ],
        );
        rules.insert("call".to_string(), vec![p("MethodCall", vec![id("var"), id("method"), rule("args")], 1.0)]);
        rules.insert("args".to_string(), vec![p("Arguments", vec![rep("operand", 0, 3)], 1.0)]);
        rules.insert(
            "operand".to_string(),
            vec![
                p("NameExpr", vec![id("var")], 3.0),
                p("IntegerLiteral", vec![lit(&["0", "1", "2", "10", "100"])], 1.0),
                p("FieldAccess", vec![id("var"), id("field")], 1.0),
                p("StringLiteral", vec![lit(&["\"\"", "\"ok\"", "\"error\""])], 0.5),
                p("NullLiteral", vec![lit(&["null"])], 0.3),
            ],
        );

        let pool = |prefix: &str, size, zipf, scope| IdentifierPool { prefix: prefix.to_string(), size, zipf, scope };
        let mut pools = BTreeMap::new();
        pools.insert("type".to_string(), pool("T", 12, 1.2, None));
        pools.insert("method".to_string(), pool("m", 40, 1.0, Some(6)));
        pools.insert("var".to_string(), pool("v", 60, 1.0, Some(6)));
        pools.insert("field".to_string(), pool("f", 20, 1.0, Some(3)));

        GrammarConfig {
            start: "method".to_string(),
            rules,
            pools,
            max_depth: 12,
            min_nodes: DEFAULT_MIN_NODES,
            max_nodes: DEFAULT_MAX_NODES,
            seed: 0,
            rename_fraction: 0.0,
            max_attempts: default_attempts(),
            project: None,
        }
    }

    /// Minimum subtree height each rule can reach, or an error for
    /// references to unknown rules or pools.
    fn min_heights(&self) -> Result<BTreeMap<&str, usize>, CorpusError> {
        for (name, prods) in &self.rules {
            if prods.is_empty() {
                return Err(CorpusError::GrammarInvalid(format!("rule {name} has no productions")));
            }
            for prod in prods {
                if !(prod.weight > 0.0) || !prod.weight.is_finite() {
                    return Err(CorpusError::GrammarInvalid(format!("rule {name}: weight must be positive")));
                }
                if prod.label.is_empty() {
                    return Err(CorpusError::GrammarInvalid(format!("rule {name}: empty label")));
                }
                for sym in &prod.children {
                    match sym {
                        Symbol::Rule(r) | Symbol::Repeat { rule: r, .. } if !self.rules.contains_key(r) => {
                            return Err(CorpusError::GrammarInvalid(format!("rule {name} references unknown rule {r}")));
                        }
                        Symbol::Repeat { min, max, .. } if min > max => {
                            return Err(CorpusError::GrammarInvalid(format!("rule {name}: repeat {min} > {max}")));
                        }
                        Symbol::Ident(pool) => match self.pools.get(pool) {
                            None => {
                                return Err(CorpusError::GrammarInvalid(format!("unknown pool {pool}")));
                            }
                            Some(p) if p.size == 0 || p.scope == Some(0) => {
                                return Err(CorpusError::GrammarInvalid(format!("pool {pool} is empty")));
                            }
                            _ => {}
                        },
                        Symbol::Literal(xs) if xs.is_empty() || xs.iter().any(String::is_empty) => {
                            return Err(CorpusError::GrammarInvalid(format!("rule {name}: bad literal set")));
                        }
                        _ => {}
                    }
                }
            }
        }
        if !self.rules.contains_key(&self.start) {
            return Err(CorpusError::GrammarInvalid(format!("unknown start rule {}", self.start)));
        }

        // Bellman-Ford style relaxation; heights only shrink.
        let mut height: BTreeMap<&str, usize> = self.rules.keys().map(|k| (k.as_str(), usize::MAX)).collect();
        loop {
            let mut changed = false;
            for (name, prods) in &self.rules {
                let best = prods.iter().map(|p| self.production_height(p, &height)).min().unwrap_or(usize::MAX);
                if best < height[name.as_str()] {
                    height.insert(name.as_str(), best);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(height)
    }

    fn production_height(&self, prod: &Production, height: &BTreeMap<&str, usize>) -> usize {
        let mut h = 1;
        for sym in &prod.children {
            let child = match sym {
                Symbol::Rule(r) => height[r.as_str()],
                Symbol::Repeat { rule, min, .. } => {
                    if *min == 0 {
                        0
                    } else {
                        height[rule.as_str()]
                    }
                }
                Symbol::Ident(_) | Symbol::Literal(_) => 1,
            };
            if child == usize::MAX {
                return usize::MAX;
            }
            h = h.max(child + 1);
        }
        h
    }
}

struct Generator<'g> {
    config: &'g GrammarConfig,
    heights: BTreeMap<&'g str, usize>,
    rng: Xoshiro256PlusPlus,
    /// Names in scope for the current tree, per pool.
    scopes: BTreeMap<&'g str, Vec<String>>,
    pool_dists: BTreeMap<&'g str, WeightedIndex<f64>>,
}

/// Node under construction: token, parent, whether it is an identifier.
type Links = Vec<(String, Option<usize>, bool)>;

impl<'g> Generator<'g> {
    fn new(config: &'g GrammarConfig, heights: BTreeMap<&'g str, usize>) -> Self {
        let pool_dists = config
            .pools
            .iter()
            .map(|(name, p)| {
                let w: Vec<f64> = (0..p.size).map(|r| 1.0 / ((r + 1) as f64).powf(p.zipf)).collect();
                (name.as_str(), WeightedIndex::new(w).expect("pool size checked"))
            })
            .collect();
        Generator { config, heights, rng: Xoshiro256PlusPlus::seed_from_u64(config.seed), scopes: BTreeMap::new(), pool_dists }
    }

    fn draw_rank(&mut self, pool: &str) -> usize {
        self.pool_dists[pool].sample(&mut self.rng)
    }

    fn reset_scopes(&mut self) {
        self.scopes.clear();
        let config = self.config;
        for (name, pool) in &config.pools {
            if let Some(scope) = pool.scope {
                let want = scope.min(pool.size);
                let mut picked = BTreeSet::new();
                while picked.len() < want {
                    let r = self.draw_rank(name);
                    picked.insert(r);
                }
                self.scopes.insert(name.as_str(), picked.into_iter().map(|r| pool.name(r)).collect());
            }
        }
    }

    fn identifier(&mut self, pool: &str) -> String {
        if let Some(names) = self.scopes.get(pool) {
            // Earlier scope entries are more frequent ranks; keep a mild skew.
            let n = names.len();
            let i = self.rng.random_range(0..n).min(self.rng.random_range(0..n));
            return names[i].clone();
        }
        let rank = self.draw_rank(pool);
        self.config.pools[pool].name(rank)
    }

    /// Expands `rule` under `parent`; `None` when the node budget is blown.
    fn expand(&mut self, rule: &str, parent: Option<usize>, depth_left: usize, out: &mut Links) -> Option<()> {
        if out.len() > self.config.max_nodes {
            return None;
        }
        let config = self.config;
        let prods = &config.rules[rule];
        let heights = &self.heights;
        let fits: Vec<(usize, f64)> = prods
            .iter()
            .enumerate()
            .filter(|(_, p)| config.production_height(p, heights) <= depth_left)
            .map(|(i, p)| (i, p.weight))
            .collect();
        // min_heights guarantees something fits whenever the caller checked.
        let dist = WeightedIndex::new(fits.iter().map(|f| f.1)).ok()?;
        let prod = &prods[fits[dist.sample(&mut self.rng)].0];

        let me = out.len();
        out.push((prod.label.clone(), parent, false));
        for sym in &prod.children {
            match sym {
                Symbol::Rule(r) => self.expand(r, Some(me), depth_left - 1, out)?,
                Symbol::Repeat { rule, min, max } => {
                    let fits = self.heights[rule.as_str()] < depth_left;
                    let k = if fits { self.rng.random_range(*min..=*max) } else { 0 };
                    for _ in 0..k {
                        self.expand(rule, Some(me), depth_left - 1, out)?;
                    }
                }
                Symbol::Ident(pool) => {
                    let name = self.identifier(pool);
                    out.push((name, Some(me), true));
                }
                Symbol::Literal(xs) => {
                    let tok = xs[self.rng.random_range(0..xs.len())].clone();
                    out.push((tok, Some(me), false));
                }
            }
        }
        Some(())
    }

    fn tree(&mut self) -> Result<Links, CorpusError> {
        let config = self.config;
        for _ in 0..config.max_attempts.max(1) {
            self.reset_scopes();
            let mut out = Vec::new();
            if self.expand(&config.start, None, config.max_depth, &mut out).is_some()
                && (config.min_nodes..=config.max_nodes).contains(&out.len())
            {
                return Ok(out);
            }
        }
        Err(CorpusError::GrammarUnsatisfiable(format!(
            "no tree with {}..={} nodes within depth {} after {} attempts",
            config.min_nodes, config.max_nodes, config.max_depth, config.max_attempts
        )))
    }
}

/// Generates `count` trees. Deterministic for a fixed config.
pub fn synth_generate(config: &GrammarConfig, count: usize) -> Result<Vec<Ast>, CorpusError> {
    let heights = config.min_heights()?;
    if heights[config.start.as_str()] > config.max_depth {
        return Err(CorpusError::GrammarUnsatisfiable(format!(
            "start rule needs depth {} but max_depth is {}",
            heights[config.start.as_str()],
            config.max_depth
        )));
    }
    if !(0.0..=1.0).contains(&config.rename_fraction) {
        return Err(CorpusError::GrammarInvalid(format!("rename_fraction {} outside [0, 1]", config.rename_fraction)));
    }
    if config.min_nodes > config.max_nodes {
        return Err(CorpusError::GrammarUnsatisfiable(format!(
            "min_nodes {} > max_nodes {}",
            config.min_nodes, config.max_nodes
        )));
    }

    let mut gen = Generator::new(config, heights);
    let mut rename_rng = Xoshiro256PlusPlus::seed_from_u64(config.seed ^ 0x5eed_0f_5a17_ba5e);
    let mut trees = Vec::with_capacity(count);
    for i in 0..count {
        let mut links = gen.tree()?;
        if config.rename_fraction > 0.0 {
            for (tok, _, is_ident) in links.iter_mut().filter(|l| l.2) {
                debug_assert!(*is_ident);
                // Always draw both values so the stream does not depend on
                // the fraction.
                let roll: f64 = rename_rng.random();
                let fresh: u32 = rename_rng.random_range(0..1_000_000);
                if roll < config.rename_fraction {
                    let prefix = tok.trim_end_matches(|c: char| c.is_ascii_digit());
                    *tok = format!("{prefix}_{fresh}");
                }
            }
        }
        let mut ast =
            Ast::build(links.into_iter().map(|(t, p, _)| (t, p))).map_err(|e| CorpusError::GrammarInvalid(e.to_string()))?;
        ast.meta = Some(TreeMeta { file: Some(format!("synthetic_{i:05}")), project: config.project.clone() });
        trees.push(ast);
    }
    Ok(trees)
}
