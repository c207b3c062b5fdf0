use std::cmp::Ordering;

/// Lexicographic rounding cost: bandwidth deviation (quantized so that equal
/// deviations compare equal), then priority-weighted carriers, then carriers.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost {
    deviation: i64,
    priority: f64,
    carriers: i64,
}

impl Cost {
    fn add(self, o: Cost) -> Cost {
        Cost {
            deviation: self.deviation + o.deviation,
            priority: self.priority + o.priority,
            carriers: self.carriers + o.carriers,
        }
    }

    fn cmp(&self, o: &Cost) -> Ordering {
        self.deviation
            .cmp(&o.deviation)
            .then(self.priority.total_cmp(&o.priority))
            .then(self.carriers.cmp(&o.carriers))
    }
}

/// Integer carrier counts from continuous bandwidths.
///
/// Each beam takes the floor or the ceiling of `W_b / W~` such that adjacent
/// beams never hold more than `2M` carriers together. Among feasible choices
/// the total deviation `sum |M_b W~ - W_b|` is minimized; ties favor ceilings
/// on beams with larger `priority` (unmet demand), then more carriers overall.
pub fn round_carriers(bandwidth_hz: &[f64], carrier_bw: f64, m: usize, priority: &[f64]) -> Vec<usize> {
    let k = bandwidth_hz.len();
    if k == 0 {
        return Vec::new();
    }
    let cap = 2 * m;
    let options: Vec<Vec<usize>> = bandwidth_hz
        .iter()
        .map(|&w| {
            let units = (w / carrier_bw).max(0.0);
            let lo = ((units + 1e-9).floor() as usize).min(cap);
            let mut v = vec![lo];
            if units - lo as f64 > 1e-9 && lo < cap {
                v.push(lo + 1);
            }
            v
        })
        .collect();
    let local = |b: usize, c: usize| Cost {
        deviation: ((c as f64 * carrier_bw - bandwidth_hz[b]).abs() / carrier_bw * 1e9).round() as i64,
        priority: -priority.get(b).copied().unwrap_or(0.0) * c as f64,
        carriers: -(c as i64),
    };

    // best[b][i]: cheapest prefix ending with option i at beam b.
    let mut best: Vec<Vec<Option<(Cost, usize)>>> = Vec::with_capacity(k);
    best.push(options[0].iter().map(|&c| Some((local(0, c), 0))).collect());
    for b in 1..k {
        let row = options[b]
            .iter()
            .map(|&c| {
                let mut pick: Option<(Cost, usize)> = None;
                for (j, &pc) in options[b - 1].iter().enumerate() {
                    let Some((prev, _)) = best[b - 1][j] else { continue };
                    if pc + c > cap {
                        continue;
                    }
                    let cost = prev.add(local(b, c));
                    if pick.is_none_or(|(p, _)| cost.cmp(&p) == Ordering::Less) {
                        pick = Some((cost, j));
                    }
                }
                pick
            })
            .collect();
        best.push(row);
    }
    let mut idx = 0;
    let mut top: Option<Cost> = None;
    for (i, entry) in best[k - 1].iter().enumerate() {
        if let Some((c, _)) = entry {
            if top.is_none_or(|t| c.cmp(&t) == Ordering::Less) {
                top = Some(*c);
                idx = i;
            }
        }
    }
    let mut out = vec![0; k];
    for b in (0..k).rev() {
        out[b] = options[b][idx];
        if b > 0 {
            idx = best[b][idx].expect("reachable").1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const WC: f64 = 62.5e6;

    fn mhz(v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x * 1e6).collect()
    }

    #[test]
    fn exact_multiples() {
        assert_eq!(round_carriers(&mhz(&[250.0; 6]), WC, 4, &[0.0; 6]), vec![4; 6]);
        assert_eq!(round_carriers(&mhz(&[312.5, 187.5]), WC, 4, &[0.0; 2]), vec![5, 3]);
    }

    #[test]
    fn ties_follow_priority() {
        // 4.5 + 3.5 carriers: ceiling goes to the hungrier beam when feasible.
        let w = [4.5 * WC, 3.5 * WC];
        assert_eq!(round_carriers(&w, WC, 4, &[2.0, 1.0]), vec![5, 3]);
        assert_eq!(round_carriers(&w, WC, 4, &[1.0, 2.0]), vec![4, 4]);
    }
}
