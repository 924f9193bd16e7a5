/// Best `(start, end)` by `start_logit + end_logit` over allowed positions with
/// `start <= end <= start + max_answer_len`. Ties keep the earliest start, then
/// the earliest end.
pub fn decode_span(start: &[f64], end: &[f64], allowed: &[bool], max_answer_len: usize) -> Option<(usize, usize)> {
    let len = start.len().min(end.len()).min(allowed.len());
    let mut best: Option<(f64, usize, usize)> = None;
    for s in (0..len).filter(|&s| allowed[s]) {
        for e in s..len.min(s + max_answer_len + 1) {
            if !allowed[e] {
                continue;
            }
            let score = start[s] + end[e];
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, s, e));
            }
        }
    }
    best.map(|(_, s, e)| (s, e))
}
