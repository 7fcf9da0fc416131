//! Line diffs between prompt bodies.

use serde::{Deserialize, Serialize};
use similar::{Algorithm, DiffOp, TextDiff};

/// Lines of context kept around each change.
pub const CONTEXT_LINES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Context,
    Removed,
    Added,
}

impl LineKind {
    fn sign(self) -> char {
        match self {
            LineKind::Context => ' ',
            LineKind::Removed => '-',
            LineKind::Added => '+',
        }
    }
}

/// One diff line. `text` keeps its line terminator if it had one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub kind: LineKind,
    pub text: String,
}

/// Starts are zero-based line offsets into the old and new bodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<DiffLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineDiff {
    pub old_label: String,
    pub new_label: String,
    pub hunks: Vec<Hunk>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("patch does not apply at line {line}: {reason}")]
pub struct PatchError {
    pub line: usize,
    pub reason: String,
}

fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

impl LineDiff {
    /// Myers line diff of `old` against `new`.
    pub fn compute(old_label: &str, old: &str, new_label: &str, new: &str) -> Self {
        let diff = TextDiff::configure().algorithm(Algorithm::Myers).diff_lines(old, new);
        let old_lines = split_lines(old);
        let new_lines = split_lines(new);
        let mut hunks = Vec::new();
        // New-side offsets are derived from old-side ones, since the
        // library does not always report a meaningful index for deletions.
        let mut shift: isize = 0;
        for group in diff.grouped_ops(CONTEXT_LINES) {
            let Some(first) = group.first() else { continue };
            let old_start = first.old_range().start;
            let new_start = (old_start as isize + shift) as usize;
            let mut lines = Vec::new();
            for op in &group {
                match *op {
                    DiffOp::Equal { old_index, len, .. } => {
                        lines.extend(
                            old_lines[old_index..old_index + len]
                                .iter()
                                .map(|t| DiffLine { kind: LineKind::Context, text: t.to_string() }),
                        );
                    }
                    DiffOp::Delete { old_index, old_len, .. } => {
                        lines.extend(
                            old_lines[old_index..old_index + old_len]
                                .iter()
                                .map(|t| DiffLine { kind: LineKind::Removed, text: t.to_string() }),
                        );
                    }
                    DiffOp::Insert { new_index, new_len, .. } => {
                        lines.extend(
                            new_lines[new_index..new_index + new_len]
                                .iter()
                                .map(|t| DiffLine { kind: LineKind::Added, text: t.to_string() }),
                        );
                    }
                    DiffOp::Replace { old_index, old_len, new_index, new_len } => {
                        lines.extend(
                            old_lines[old_index..old_index + old_len]
                                .iter()
                                .map(|t| DiffLine { kind: LineKind::Removed, text: t.to_string() }),
                        );
                        lines.extend(
                            new_lines[new_index..new_index + new_len]
                                .iter()
                                .map(|t| DiffLine { kind: LineKind::Added, text: t.to_string() }),
                        );
                    }
                }
            }
            let old_len = lines.iter().filter(|l| l.kind != LineKind::Added).count();
            let new_len = lines.iter().filter(|l| l.kind != LineKind::Removed).count();
            shift += new_len as isize - old_len as isize;
            hunks.push(Hunk { old_start, old_len, new_start, new_len, lines });
        }
        LineDiff { old_label: old_label.into(), new_label: new_label.into(), hunks }
    }

    pub fn is_empty(&self) -> bool {
        self.hunks.is_empty()
    }

    pub fn added(&self) -> usize {
        self.count(LineKind::Added)
    }

    pub fn removed(&self) -> usize {
        self.count(LineKind::Removed)
    }

    fn count(&self, kind: LineKind) -> usize {
        self.hunks.iter().flat_map(|h| &h.lines).filter(|l| l.kind == kind).count()
    }

    /// Swaps the roles of old and new: additions become removals and back.
    pub fn invert(&self) -> Self {
        let hunks = self
            .hunks
            .iter()
            .map(|h| {
                let mut removed = Vec::new();
                let mut lines = Vec::new();
                // Keep removals ahead of additions inside each change block.
                let mut pending_added = Vec::new();
                for l in &h.lines {
                    match l.kind {
                        LineKind::Context => {
                            lines.append(&mut removed);
                            lines.append(&mut pending_added);
                            lines.push(l.clone());
                        }
                        LineKind::Removed => {
                            pending_added.push(DiffLine { kind: LineKind::Added, text: l.text.clone() })
                        }
                        LineKind::Added => removed.push(DiffLine { kind: LineKind::Removed, text: l.text.clone() }),
                    }
                }
                lines.append(&mut removed);
                lines.append(&mut pending_added);
                Hunk { old_start: h.new_start, old_len: h.new_len, new_start: h.old_start, new_len: h.old_len, lines }
            })
            .collect();
        LineDiff { old_label: self.new_label.clone(), new_label: self.old_label.clone(), hunks }
    }

    /// Applies the diff to the old body, checking every context and removed line.
    pub fn apply(&self, old: &str) -> Result<String, PatchError> {
        let lines = split_lines(old);
        let mut out = String::with_capacity(old.len());
        let mut cursor = 0;
        for h in &self.hunks {
            if h.old_start < cursor || h.old_start > lines.len() {
                return Err(PatchError { line: h.old_start + 1, reason: "hunk out of order or past the end".into() });
            }
            for l in &lines[cursor..h.old_start] {
                out.push_str(l);
            }
            cursor = h.old_start;
            for l in &h.lines {
                match l.kind {
                    LineKind::Added => out.push_str(&l.text),
                    LineKind::Context | LineKind::Removed => {
                        if lines.get(cursor) != Some(&l.text.as_str()) {
                            return Err(PatchError { line: cursor + 1, reason: format!("expected {:?}", l.text) });
                        }
                        if l.kind == LineKind::Context {
                            out.push_str(&l.text);
                        }
                        cursor += 1;
                    }
                }
            }
        }
        for l in &lines[cursor.min(lines.len())..] {
            out.push_str(l);
        }
        Ok(out)
    }

    /// Unified-style text. Identical bodies render as the empty string.
    pub fn render(&self) -> String {
        if self.hunks.is_empty() {
            return String::new();
        }
        let mut out = format!("--- {}\n+++ {}\n", self.old_label, self.new_label);
        for h in &self.hunks {
            out.push_str(&format!(
                "@@ -{} +{} @@\n",
                range_label(h.old_start, h.old_len),
                range_label(h.new_start, h.new_len)
            ));
            for l in &h.lines {
                out.push(l.kind.sign());
                match l.text.strip_suffix('\n') {
                    Some(t) => {
                        out.push_str(t);
                        out.push('\n');
                    }
                    None => {
                        out.push_str(&l.text);
                        out.push_str("\n\\ No newline at end of file\n");
                    }
                }
            }
        }
        out
    }
}

fn range_label(start: usize, len: usize) -> String {
    let first = if len == 0 { start } else { start + 1 };
    if len == 1 {
        first.to_string()
    } else {
        format!("{first},{len}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn test_identical_bodies_empty_diff() {
        let d = LineDiff::compute("a", "x\ny\n", "b", "x\ny\n");
        assert!(d.is_empty());
        assert_eq!(d.render(), "");
    }

    #[test]
    fn test_one_added_line_one_hunk() {
        let d = LineDiff::compute("a", "one\ntwo\n", "b", "one\ntwo\nthree\n");
        assert_eq!(d.hunks.len(), 1);
        assert_eq!(d.added(), 1);
        assert_eq!(d.removed(), 0);
        assert_eq!(d.render(), "--- a\n+++ b\n@@ -1,2 +1,3 @@\n one\n two\n+three\n");
    }

    #[test]
    fn test_missing_trailing_newline_marked() {
        let d = LineDiff::compute("a", "x", "b", "y");
        assert_eq!(
            d.render(),
            "--- a\n+++ b\n@@ -1 +1 @@\n-x\n\\ No newline at end of file\n+y\n\\ No newline at end of file\n"
        );
        assert_eq!(d.apply("x").unwrap(), "y");
    }

    #[test]
    fn test_apply_rejects_wrong_base() {
        let d = LineDiff::compute("a", "one\ntwo\n", "b", "one\n2\n");
        assert!(d.apply("uno\ntwo\n").is_err());
    }

    fn body() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "keep calm", "", "é"]), 0..12).prop_flat_map(
            |lines| {
                let joined = lines.join("\n");
                prop::bool::ANY.prop_map(move |nl| if nl { format!("{joined}\n") } else { joined.clone() })
            },
        )
    }

    proptest! {
        #[test]
        fn test_diff_apply_and_inverse(a in body(), b in body()) {
            let d = LineDiff::compute("a", &a, "b", &b);
            prop_assert_eq!(d.apply(&a).unwrap(), b.clone());
            let inv = d.invert();
            prop_assert_eq!(inv.apply(&b).unwrap(), a.clone());
            prop_assert_eq!(inv.invert(), d.clone());
            let back = LineDiff::compute("b", &b, "a", &a);
            prop_assert_eq!(back.added(), d.removed());
            prop_assert_eq!(back.removed(), d.added());
            prop_assert_eq!(d.is_empty(), a == b);
        }
    }
}
