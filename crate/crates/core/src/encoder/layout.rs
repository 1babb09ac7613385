//! Mention context windows and the token layouts of the two encoders.

use serde::{Deserialize, Serialize};

use super::attention::AttentionPattern;
use super::tokenizer::{pretokenize_spans, Special, Tokenizer, MENTION_CLOSE, MENTION_OPEN};
use super::transformer::Sequence;
use crate::corpus::{CqaText, Mention};

/// Token budgets of both input layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Tokens of the mention context window, markers included.
    pub context: usize,
    /// Total length of `[CLS] C [SEP] D [SEP]`.
    pub pair_total: usize,
    pub aux_description: usize,
    pub aux_text: usize,
    /// Longest auxiliary sequence; trailing texts that do not fit are dropped.
    pub aux_total: usize,
    pub window: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            context: 64,
            pair_total: 128,
            aux_description: 128,
            aux_text: 64,
            aux_total: 512,
            window: 64,
        }
    }
}

/// The host text around a mention split into (before, surface, after).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MentionWindow {
    pub before: String,
    pub surface: String,
    pub after: String,
}

impl MentionWindow {
    /// Window text with the mention bracketed by boundary markers.
    pub fn marked(&self) -> String {
        let mut out = String::new();
        if !self.before.is_empty() {
            out.push_str(self.before.trim_end());
            out.push(' ');
        }
        out.push_str(MENTION_OPEN);
        out.push(' ');
        out.push_str(&self.surface);
        out.push(' ');
        out.push_str(MENTION_CLOSE);
        if !self.after.is_empty() {
            out.push(' ');
            out.push_str(self.after.trim_start());
        }
        out
    }

    /// Window text without markers.
    pub fn plain(&self) -> String {
        format!("{}{}{}", self.before, self.surface, self.after)
    }
}

/// Cuts the host text of `m` to at most `budget` word pieces (two of them
/// reserved for the markers), centered on the mention and extended to one
/// side when the other runs out. The mention itself is never cut.
pub fn mention_window(z: &CqaText, m: &Mention, budget: usize) -> MentionWindow {
    let host = z.host_text(m).unwrap_or_default();
    let chars: Vec<char> = host.chars().collect();
    let start = m.start.min(chars.len());
    let end = m.end.clamp(start, chars.len());
    let spans = pretokenize_spans(host);
    let left: Vec<&(usize, usize)> = spans.iter().filter(|s| s.1 <= start).collect();
    let right: Vec<&(usize, usize)> = spans.iter().filter(|s| s.0 >= end).collect();
    let inside = spans.len() - left.len() - right.len();

    let room = budget.saturating_sub(2 + inside);
    let mut take_left = (room / 2).min(left.len());
    let take_right = (room - take_left).min(right.len());
    take_left = (room - take_right).min(left.len());

    let from = if take_left == 0 {
        start
    } else {
        left[left.len() - take_left].0
    };
    let to = if take_right == 0 { end } else { right[take_right - 1].1 };
    let slice = |a: usize, b: usize| chars[a..b].iter().collect::<String>();
    MentionWindow {
        before: slice(from, start),
        surface: slice(start, end),
        after: slice(end, to),
    }
}

/// Marked mention context of at most `budget` tokens (`budget >= 8`).
pub fn mention_context(z: &CqaText, m: &Mention, budget: usize) -> String {
    mention_window(z, m, budget.max(8)).marked()
}

/// Shortens `ids` to `n` tokens, removing from whichever end lies farther
/// from the mention markers so they are kept.
fn trim_around_markers(ids: &mut Vec<usize>, n: usize) {
    let open = Special::Mention.id();
    let close = Special::SlashMention.id();
    while ids.len() > n {
        let first = ids.iter().position(|&t| t == open || t == close);
        let last = ids.iter().rposition(|&t| t == open || t == close);
        let (head, tail) = match (first, last) {
            (Some(f), Some(l)) => (f, ids.len() - 1 - l),
            _ => (0, 1),
        };
        if head > tail {
            ids.remove(0);
        } else if tail > 0 {
            ids.pop();
        } else {
            // only markers left at both ends
            break;
        }
    }
}

/// `[CLS] context [SEP] description [SEP]` with segments 0 / 1. Context is
/// capped at `limits.context` tokens; while over the total, the longer side
/// loses a token.
pub fn context_pair(tok: &Tokenizer, context: &str, description: &str, limits: &Limits) -> Sequence {
    let mut ctx = tok.encode(context);
    let mut desc = tok.encode(description);
    trim_around_markers(&mut ctx, limits.context);
    let room = limits.pair_total.saturating_sub(3);
    let (mut c, mut d) = (ctx.len(), desc.len());
    while c + d > room {
        if c > d {
            c -= 1;
        } else {
            d -= 1;
        }
    }
    trim_around_markers(&mut ctx, c);
    desc.truncate(d);

    let mut ids = Vec::with_capacity(ctx.len() + desc.len() + 3);
    ids.push(Special::Cls.id());
    ids.extend(&ctx);
    ids.push(Special::Sep.id());
    let first = ids.len();
    ids.extend(&desc);
    ids.push(Special::Sep.id());
    let segments = (0..ids.len()).map(|i| usize::from(i >= first)).collect();
    Sequence {
        ids,
        segments,
        pattern: AttentionPattern::Dense,
    }
}

/// `<s><d> D </d></s> <q> q1 </q> ... <q> qk </q> </s>`: segment 0 up to the
/// first `</s>`, segment 1 after. Windowed attention with `<s>` global.
pub fn aux_sequence<S: AsRef<str>>(tok: &Tokenizer, description: &str, texts: &[S], limits: &Limits) -> Sequence {
    let mut ids = vec![Special::S.id(), Special::D.id()];
    let mut desc = tok.encode(description);
    desc.truncate(limits.aux_description);
    ids.extend(desc);
    ids.push(Special::SlashD.id());
    ids.push(Special::SlashS.id());
    let first = ids.len();
    for t in texts {
        let mut q = tok.encode(t.as_ref());
        q.truncate(limits.aux_text);
        if ids.len() + q.len() + 3 > limits.aux_total {
            break;
        }
        ids.push(Special::Q.id());
        ids.extend(q);
        ids.push(Special::SlashQ.id());
    }
    ids.push(Special::SlashS.id());
    let segments = (0..ids.len()).map(|i| usize::from(i >= first)).collect();
    Sequence {
        ids,
        segments,
        pattern: AttentionPattern::windowed(limits.window, vec![0]),
    }
}
