//! Splits prompt text into constraint units.
//!
//! A unit is a bullet or numbered line, a heading line, a line inside a
//! fenced block, or a sentence of a paragraph. Paragraphs are runs of other
//! non-blank lines; sentences end at `.`, `!` or `?` (plus any closing quotes)
//! followed by whitespace or the paragraph end. The `.` closing "e.g." or
//! "i.e." never ends a sentence.

use std::ops::Range;

fn bullet_prefix_len(line: &str) -> Option<usize> {
    let lead = line.len() - line.trim_start().len();
    let rest = &line[lead..];
    let marker = if rest.starts_with(['-', '*', '•']) {
        rest.chars().next().map(char::len_utf8)
    } else {
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        (digits > 0 && matches!(rest.as_bytes().get(digits), Some(b'.') | Some(b')'))).then_some(digits + 1)
    }?;
    let after = &rest[marker..];
    let ws = after.len() - after.trim_start().len();
    (ws > 0).then_some(lead + marker + ws)
}

fn has_word(s: &str) -> bool {
    s.chars().any(|c| c.is_alphanumeric() || c == '_')
}

fn trimmed(text: &str, range: Range<usize>) -> Range<usize> {
    let s = &text[range.clone()];
    let start = range.start + (s.len() - s.trim_start().len());
    let end = range.start + s.trim_end().len();
    start..end.max(start)
}

fn is_abbreviation(prefix: &str) -> bool {
    let lower = prefix.to_lowercase();
    let Some(head) = lower.strip_suffix("e.g.").or_else(|| lower.strip_suffix("i.e.")) else {
        return false;
    };
    !head.chars().next_back().is_some_and(|c| c.is_alphanumeric() || c == '_')
}

fn split_sentences(text: &str, para: Range<usize>, out: &mut Vec<Range<usize>>) {
    let p = &text[para.clone()];
    let chars: Vec<(usize, char)> = p.char_indices().collect();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (bi, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '"' | '\'' | '”' | '’' | ')') {
                j += 1;
            }
            let abbrev = c == '.' && is_abbreviation(&p[..bi + 1]);
            if (j == chars.len() || chars[j].1.is_whitespace()) && !abbrev {
                let end = chars.get(j).map_or(p.len(), |&(b, _)| b);
                push_unit(text, para.start + start..para.start + end, out);
                start = end;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    push_unit(text, para.start + start..para.end, out);
}

fn push_unit(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let r = trimmed(text, range);
    if has_word(&text[r.clone()]) {
        out.push(r);
    }
}

/// Byte ranges of every unit, in document order.
pub fn units(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut para: Option<Range<usize>> = None;
    let mut fenced = false;
    let mut offset = 0;
    for raw in text.split('\n') {
        let line_start = offset;
        offset += raw.len() + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line_range = line_start..line_start + line.len();
        let st = line.trim();
        let flush = |para: &mut Option<Range<usize>>, out: &mut Vec<Range<usize>>| {
            if let Some(p) = para.take() {
                split_sentences(text, p, out);
            }
        };
        if st.starts_with("```") {
            flush(&mut para, &mut out);
            fenced = !fenced;
            continue;
        }
        let bullet = bullet_prefix_len(line);
        if fenced || bullet.is_some() || st.starts_with('#') {
            flush(&mut para, &mut out);
            push_unit(text, line_start + bullet.unwrap_or(0)..line_range.end, &mut out);
            continue;
        }
        if st.is_empty() {
            flush(&mut para, &mut out);
            continue;
        }
        let content = trimmed(text, line_range);
        para = Some(match para {
            Some(p) => p.start..content.end,
            None => content,
        });
    }
    if let Some(p) = para {
        split_sentences(text, p, &mut out);
    }
    out
}
