//! Wikitext anchor-link extraction.
//!
//! Only `[[Target]]` / `[[Target|surface]]` links, `<!-- -->` comments and
//! `<nowiki>` regions are understood. Everything else is plain text.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchor {
    pub target: String,
    pub surface: String,
}

/// Namespaces whose links are not entity anchors.
const SKIPPED_NAMESPACES: &[&str] = &["file", "image", "category", "media", "template", "wikipedia", "help", "special"];

/// Byte ranges of `text` that are hidden from link parsing.
fn hidden_regions(text: &str) -> Vec<(usize, usize)> {
    let lower = text.to_ascii_lowercase();
    let mut regions = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let comment = lower[pos..].find("<!--").map(|i| (i + pos, "<!--", "-->"));
        let nowiki = lower[pos..].find("<nowiki>").map(|i| (i + pos, "<nowiki>", "</nowiki>"));
        let next = match (comment, nowiki) {
            (Some(c), Some(n)) => Some(if c.0 < n.0 { c } else { n }),
            (c, n) => c.or(n),
        };
        let Some((start, open, close)) = next else { break };
        let body = start + open.len();
        let end = lower[body..]
            .find(close)
            .map(|i| body + i + close.len())
            .unwrap_or(text.len());
        regions.push((start, end));
        pos = end;
    }
    regions
}

/// Canonical form of a link target: fragment removed, underscores as
/// spaces, whitespace collapsed, first letter upper-cased.
pub fn normalize_target(raw: &str) -> String {
    let no_fragment = raw.split('#').next().unwrap_or("");
    let spaced = no_fragment.replace('_', " ");
    let collapsed = spaced.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut chars = collapsed.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn is_skipped_namespace(target: &str) -> bool {
    target
        .split_once(':')
        .map(|(ns, _)| SKIPPED_NAMESPACES.contains(&ns.trim().to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn parse_link(inner: &str) -> Option<Anchor> {
    let (raw_target, raw_surface) = match inner.split_once('|') {
        Some((t, s)) => (t, Some(s)),
        None => (inner, None),
    };
    if is_skipped_namespace(raw_target) {
        return None;
    }
    let target = normalize_target(raw_target);
    if target.is_empty() {
        return None;
    }
    let surface = raw_surface.unwrap_or(raw_target).trim().to_string();
    if surface.is_empty() {
        return None;
    }
    Some(Anchor { target, surface })
}

/// Extracts anchor links in document order. Malformed links (no closing
/// brackets, or a nested opening) are skipped.
pub fn extract_anchors(page_text: &str) -> Vec<Anchor> {
    let hidden = hidden_regions(page_text);
    let mut anchors = Vec::new();
    let mut segment_start = 0;
    for &(h_start, h_end) in hidden.iter().chain(std::iter::once(&(page_text.len(), page_text.len()))) {
        scan_links(&page_text[segment_start..h_start], &mut anchors);
        segment_start = h_end;
    }
    anchors
}

fn scan_links(text: &str, out: &mut Vec<Anchor>) {
    let mut pos = 0;
    while let Some(open) = text[pos..].find("[[") {
        let body = pos + open + 2;
        let close = text[body..].find("]]").map(|i| body + i);
        let reopen = text[body..].find("[[").map(|i| body + i);
        match (close, reopen) {
            (Some(c), Some(r)) if r < c => {
                pos = r;
            }
            (Some(c), _) => {
                if let Some(a) = parse_link(&text[body..c]) {
                    out.push(a);
                }
                pos = c + 2;
            }
            (None, Some(r)) => pos = r,
            (None, None) => break,
        }
    }
}

/// Renders wikitext to plain text: links become their surface, comments and
/// templates vanish, nowiki bodies are kept verbatim, and bold/italic and
/// heading markers are dropped.
pub fn plain_text(page_text: &str) -> String {
    let mut out = String::with_capacity(page_text.len());
    let hidden = hidden_regions(page_text);
    let mut segment_start = 0;
    for &(h_start, h_end) in hidden.iter() {
        render_segment(&page_text[segment_start..h_start], &mut out);
        let region = &page_text[h_start..h_end];
        if region.to_ascii_lowercase().starts_with("<nowiki>") {
            let body = &region["<nowiki>".len()..];
            out.push_str(body.strip_suffix("</nowiki>").unwrap_or(body));
        }
        segment_start = h_end;
    }
    render_segment(&page_text[segment_start..], &mut out);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn render_segment(text: &str, out: &mut String) {
    let text = strip_templates(text);
    let mut rendered = String::with_capacity(text.len());
    let mut pos = 0;
    while let Some(open) = text[pos..].find("[[") {
        rendered.push_str(&text[pos..pos + open]);
        let body = pos + open + 2;
        match text[body..].find("]]") {
            Some(c) => {
                let inner = &text[body..body + c];
                if !is_skipped_namespace(inner) {
                    let shown = inner.rsplit_once('|').map(|(_, s)| s).unwrap_or(inner);
                    rendered.push_str(shown);
                }
                pos = body + c + 2;
            }
            None => pos = body,
        }
    }
    rendered.push_str(&text[pos..]);
    let rendered = rendered.replace("'''", "").replace("''", "");
    for line in rendered.lines() {
        out.push_str(line.trim().trim_matches('=').trim());
        out.push(' ');
    }
}

fn strip_templates(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut run_start = 0;
    while i < bytes.len() {
        if bytes[i..].starts_with(b"{{") {
            if depth == 0 {
                out.push_str(&text[run_start..i]);
            }
            depth += 1;
            i += 2;
        } else if depth > 0 && bytes[i..].starts_with(b"}}") {
            depth -= 1;
            i += 2;
            run_start = i;
        } else {
            i += 1;
        }
    }
    if depth == 0 {
        out.push_str(&text[run_start..]);
    }
    out
}
