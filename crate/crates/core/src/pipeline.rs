//! Text → sentence tree → model input, with the three ablation switches.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inject::{flatten, k_inject, visible_matrix, FlatSequence, SentenceTree, VisibleMatrix};
use crate::kg::{EntityMatch, EntityMatcher, KnowledgeGraph, QueryLimits};
use crate::model::{KBert, ModelInput};
use crate::tensor::Matrix;
use crate::tokenizer::{Token, Tokenizer, CLS_ID, SEP_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switches {
    pub use_kg: bool,
    pub use_soft_position: bool,
    pub use_visible_matrix: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Switches::full()
    }
}

impl Switches {
    pub fn full() -> Self {
        Switches {
            use_kg: true,
            use_soft_position: true,
            use_visible_matrix: true,
        }
    }

    pub fn no_kg() -> Self {
        Switches {
            use_kg: false,
            ..Switches::full()
        }
    }

    pub fn no_visible_matrix() -> Self {
        Switches {
            use_visible_matrix: false,
            ..Switches::full()
        }
    }

    pub fn no_soft_position() -> Self {
        Switches {
            use_soft_position: false,
            ..Switches::full()
        }
    }
}

/// Everything produced for one input on its way to the network.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub tree: SentenceTree,
    pub flat: FlatSequence,
    pub matrix: VisibleMatrix,
    pub input: ModelInput,
}

/// Tokenizer + knowledge graph + limits. Cheap to build; borrows the graph.
#[derive(Debug, Clone)]
pub struct Pipeline<'a> {
    tokenizer: &'a Tokenizer,
    matcher: EntityMatcher<'a>,
    pub limits: QueryLimits,
    pub max_seq_len: usize,
    pub switches: Switches,
}

impl<'a> Pipeline<'a> {
    pub fn new(tokenizer: &'a Tokenizer, kg: &'a KnowledgeGraph, max_seq_len: usize) -> Self {
        Pipeline {
            tokenizer,
            matcher: EntityMatcher::new(kg, tokenizer.mode()),
            limits: QueryLimits::default(),
            max_seq_len,
            switches: Switches::full(),
        }
    }

    pub fn with_switches(mut self, switches: Switches) -> Self {
        self.switches = switches;
        self
    }

    pub fn with_limits(mut self, limits: QueryLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        self.tokenizer
    }

    fn query(&self, sentence: &[Token], offset: usize) -> Vec<EntityMatch> {
        if !self.switches.use_kg {
            return Vec::new();
        }
        let mut matches = self.matcher.query(sentence, self.limits);
        for m in &mut matches {
            m.start += offset;
            m.end += offset;
        }
        matches
    }

    /// `[CLS] first` or `[CLS] first [SEP] second`, with knowledge injected
    /// into both sentences and the tree fitted to `max_seq_len`.
    pub fn tree_for_text(&self, first: &str, second: Option<&str>) -> Result<SentenceTree> {
        let first = self.tokenizer.tokenize(first);
        let second = second.map(|s| self.tokenizer.tokenize(s));
        self.tree_for_tokens(first, second)
    }

    /// Same as [`tree_for_text`](Self::tree_for_text) for pre-split surfaces.
    pub fn tree_for_surfaces<S: AsRef<str>>(&self, surfaces: &[S]) -> Result<SentenceTree> {
        self.tree_for_tokens(self.tokenizer.tokens_from_surfaces(surfaces), None)
    }

    fn tree_for_tokens(&self, first: Vec<Token>, second: Option<Vec<Token>>) -> Result<SentenceTree> {
        let mut trunk = Vec::with_capacity(first.len() + 2);
        trunk.push(self.tokenizer.special(CLS_ID));
        let mut matches = self.query(&first, 1);
        trunk.extend(first);
        if let Some(second) = second {
            trunk.push(self.tokenizer.special(SEP_ID));
            matches.extend(self.query(&second, trunk.len()));
            trunk.extend(second);
        }
        let mut tree = k_inject(trunk, &matches, self.tokenizer)?;
        tree.fit(self.max_seq_len);
        Ok(tree)
    }

    /// Flattens a tree and applies the soft-position and visible-matrix
    /// switches.
    pub fn encode_tree(&self, tree: SentenceTree) -> Encoded {
        let mut flat = flatten(&tree);
        if !self.switches.use_soft_position {
            flat.use_hard_positions();
        }
        let matrix = if self.switches.use_visible_matrix {
            visible_matrix(&flat, &tree)
        } else {
            VisibleMatrix::all_visible(flat.len())
        };
        let input = ModelInput::from_flat(&flat, matrix.clone());
        Encoded {
            tree,
            flat,
            matrix,
            input,
        }
    }

    pub fn encode_text(&self, first: &str, second: Option<&str>) -> Result<Encoded> {
        Ok(self.encode_tree(self.tree_for_text(first, second)?))
    }

    pub fn encode_surfaces<S: AsRef<str>>(&self, surfaces: &[S]) -> Result<Encoded> {
        Ok(self.encode_tree(self.tree_for_surfaces(surfaces)?))
    }

    pub fn logits(&self, net: &KBert, text: &str) -> Result<Matrix> {
        net.logits(&self.encode_text(text, None)?.input)
    }
}

/// Tokenize, inject (unless `use_kg` is off), flatten, mask, embed, encode
/// and apply the head.
pub fn forward_task(
    text: &str,
    kg: &KnowledgeGraph,
    tokenizer: &Tokenizer,
    net: &KBert,
    switches: Switches,
) -> Result<Matrix> {
    Pipeline::new(tokenizer, kg, net.config().max_seq_len)
        .with_switches(switches)
        .logits(net, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;
    use crate::model::HeadKind;
    use crate::tokenizer::{build_vocab, TokenizeMode};
    use crate::transformer::ModelConfig;

    fn setup() -> (Tokenizer, KnowledgeGraph) {
        let vocab = build_vocab(
            &["Tim Cook is visiting Beijing now CEO Apple capital China is_a City"],
            1,
            TokenizeMode::Whitespace,
        )
        .unwrap();
        let kg = KnowledgeGraph::from_triples([
            Triple::new("Cook", "CEO", "Apple"),
            Triple::new("Beijing", "capital", "China"),
            Triple::new("Beijing", "is_a", "City"),
        ]);
        (Tokenizer::new(vocab, TokenizeMode::Whitespace), kg)
    }

    #[test]
    fn tim_cook_through_pipeline() {
        let (tk, kg) = setup();
        let p = Pipeline::new(&tk, &kg, 64);
        let enc = p.encode_text("Tim Cook is visiting Beijing now", None).unwrap();
        assert_eq!(enc.flat.soft_positions(), [0, 1, 2, 3, 4, 3, 4, 5, 6, 7, 6, 7, 6]);
        assert_eq!(enc.input.word_rows, [1, 2, 5, 6, 7, 12]);
    }

    #[test]
    fn switches_shape_the_input() {
        let (tk, kg) = setup();
        let text = "Tim Cook is visiting Beijing now";
        let hard = Pipeline::new(&tk, &kg, 64).with_switches(Switches::no_soft_position());
        let enc = hard.encode_text(text, None).unwrap();
        assert_eq!(enc.input.positions, (0..13).collect::<Vec<_>>());
        let open = Pipeline::new(&tk, &kg, 64).with_switches(Switches::no_visible_matrix());
        let enc = open.encode_text(text, None).unwrap();
        assert!(enc.matrix.as_slice().iter().all(|&v| v == 0.0));
        let plain = Pipeline::new(&tk, &kg, 64).with_switches(Switches::no_kg());
        assert_eq!(plain.encode_text(text, None).unwrap().flat.len(), 7);
    }

    #[test]
    fn no_match_sentence_is_independent_of_use_kg() {
        let (tk, kg) = setup();
        let cfg = ModelConfig {
            hidden: 8,
            ff: 16,
            ..ModelConfig::desk(tk.vocab().len())
        };
        let net = KBert::new(cfg, HeadKind::Classify, 2, 3).unwrap();
        let a = forward_task("Tim is now", &kg, &tk, &net, Switches::full()).unwrap();
        let b = forward_task("Tim is now", &kg, &tk, &net, Switches::no_kg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sentence_pairs_get_injected_and_segmented() {
        let (tk, kg) = setup();
        let p = Pipeline::new(&tk, &kg, 64);
        let enc = p.encode_text("Tim Cook", Some("Beijing now")).unwrap();
        assert_eq!(enc.tree.branches.len(), 3);
        assert_eq!(enc.tree.branches[1].anchor, (4, 5));
    }

    #[test]
    fn long_inputs_are_fitted() {
        let (tk, kg) = setup();
        let p = Pipeline::new(&tk, &kg, 9);
        let enc = p.encode_text("Tim Cook is visiting Beijing now", None).unwrap();
        assert!(enc.flat.len() <= 9);
        assert_eq!(enc.tree.trunk.len(), 7);
        assert_eq!(enc.tree.branches.len(), 1);
    }
}
