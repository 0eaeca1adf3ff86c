use std::ops::Range;

use crate::datamodel::ProbeExample;
use crate::error::{Error, Result};

pub const START_TOKEN: &str = "<s>";
pub const SEPARATOR_TOKEN: &str = "</s>";
pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Start,
    Separator,
    Question,
    SchemaItem(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub slots: Range<usize>,
}

/// Token-slot layout of the encoder input:
///
/// ```text
/// <s> q_1 .. q_|Q| </s> </s> s_1 </s> s_2 .. </s> s_|S|
/// ```
///
/// Question tokens occupy one slot each (word level); schema items occupy
/// one slot per name token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputLayout {
    example_id: String,
    tokens: Vec<String>,
    segments: Vec<Segment>,
    question_slots: Vec<Range<usize>>,
    schema_slots: Vec<Range<usize>>,
}

impl InputLayout {
    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_question(&self) -> usize {
        self.question_slots.len()
    }

    pub fn n_schema(&self) -> usize {
        self.schema_slots.len()
    }

    pub fn question_slots(&self, i: usize) -> Range<usize> {
        self.question_slots[i].clone()
    }

    pub fn schema_slots(&self, j: usize) -> Range<usize> {
        self.schema_slots[j].clone()
    }

    pub fn schema_item_tokens(&self, j: usize) -> &[String] {
        &self.tokens[self.schema_slots[j].clone()]
    }

    pub fn delimiter_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Start | SegmentKind::Separator))
            .count()
    }

    /// The input with every slot of question word `i` replaced by [`MASK_TOKEN`].
    pub fn masked_tokens(&self, i: usize) -> Result<Vec<String>> {
        let range = self.question_slots.get(i).cloned().ok_or_else(|| {
            Error::Validation(format!(
                "masked question index {i} out of range for {} tokens",
                self.n_question()
            ))
        })?;
        let mut tokens = self.tokens.clone();
        for slot in range {
            tokens[slot] = MASK_TOKEN.to_owned();
        }
        Ok(tokens)
    }
}

pub fn build_input_layout(example: &ProbeExample) -> InputLayout {
    let items: Vec<&[String]> = example.schema().items().iter().map(|it| it.name_tokens()).collect();
    layout_from_parts(example.example_id(), example.question_tokens(), &items)
}

/// Builds a layout from raw question words and schema item name tokens.
pub fn layout_from_parts(example_id: &str, question: &[String], items: &[&[String]]) -> InputLayout {
    let mut tokens = Vec::new();
    let mut segments = Vec::new();

    let mut push = |tokens: &mut Vec<String>, kind: SegmentKind, words: &[String]| -> Range<usize> {
        let start = tokens.len();
        tokens.extend(words.iter().cloned());
        let slots = start..tokens.len();
        segments.push(Segment {
            kind,
            slots: slots.clone(),
        });
        slots
    };
    let start = [START_TOKEN.to_owned()];
    let sep = [SEPARATOR_TOKEN.to_owned()];

    push(&mut tokens, SegmentKind::Start, &start);
    let q = push(&mut tokens, SegmentKind::Question, question);
    push(&mut tokens, SegmentKind::Separator, &sep);
    let question_slots = q.map(|slot| slot..slot + 1).collect();

    let mut schema_slots = Vec::with_capacity(items.len());
    for (j, item) in items.iter().enumerate() {
        push(&mut tokens, SegmentKind::Separator, &sep);
        schema_slots.push(push(&mut tokens, SegmentKind::SchemaItem(j), item));
    }

    InputLayout {
        example_id: example_id.to_owned(),
        tokens,
        segments,
        question_slots,
        schema_slots,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::datamodel::Schema;

    fn example(question: &[&str], columns: &[&str]) -> ProbeExample {
        let cols = columns.iter().map(|c| (0, vec![c.to_string()])).collect();
        let schema = Schema::new("db", vec![vec!["t".into()]], cols).unwrap();
        ProbeExample::new(
            "e",
            question.iter().map(|s| s.to_string()).collect(),
            Arc::new(schema),
            None,
        )
        .unwrap()
    }

    #[test]
    fn three_tokens_two_items() {
        // schema = [table t, column a]
        let layout = build_input_layout(&example(&["a", "b", "c"], &["a"]));
        assert_eq!(layout.n_question() + layout.n_schema(), 5);
        assert_eq!(layout.question_slots(0), 1..2);
        assert_eq!(layout.question_slots(2), 3..4);
        // <s> a b c </s> </s> t </s> a
        assert_eq!(layout.schema_slots(0), 6..7);
        assert_eq!(layout.schema_slots(1), 8..9);
        assert_eq!(layout.tokens()[4], SEPARATOR_TOKEN);
    }

    #[test]
    fn single_token_single_item_has_three_delimiters() {
        let item = vec!["c".to_string()];
        let layout = layout_from_parts("e", &["q".to_string()], &[&item]);
        assert_eq!(layout.delimiter_count(), 3);
        let toks: Vec<&str> = layout.tokens().iter().map(String::as_str).collect();
        assert_eq!(toks, ["<s>", "q", "</s>", "</s>", "c"]);
    }

    #[test]
    fn one_separator_per_schema_item_plus_question_delimiters() {
        let layout = build_input_layout(&example(&["q"], &["c"]));
        assert_eq!(layout.delimiter_count(), 2 + layout.n_schema());
        let toks: Vec<&str> = layout.tokens().iter().map(String::as_str).collect();
        assert_eq!(toks, ["<s>", "q", "</s>", "</s>", "t", "</s>", "c"]);
    }

    #[test]
    fn slot_maps_are_total_and_ordered() {
        let ex = example(&["x", "y"], &["a", "b", "c"]);
        let layout = build_input_layout(&ex);
        let mut last_end = 0;
        let ranges = (0..layout.n_question())
            .map(|i| layout.question_slots(i))
            .chain((0..layout.n_schema()).map(|j| layout.schema_slots(j)));
        for r in ranges {
            assert!(r.start >= last_end && !r.is_empty());
            last_end = r.end;
        }
        assert_eq!(last_end, layout.tokens().len());
    }

    #[test]
    fn masking_replaces_only_target_word() {
        let layout = build_input_layout(&example(&["x", "y"], &["a"]));
        let masked = layout.masked_tokens(1).unwrap();
        assert_eq!(masked[1], "x");
        assert_eq!(masked[2], MASK_TOKEN);
        assert!(layout.masked_tokens(2).is_err());
    }
}
