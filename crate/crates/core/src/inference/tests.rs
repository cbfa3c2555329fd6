use super::*;
use crate::context::{cloze_mask, from_order_mask};

/// Position-wise rule: `rule(n, tokens, mask)` gives the prediction at `n`.
struct Rule<F> {
    lengths: Vec<f64>,
    rule: F,
}

impl<F> ConditionalModel for Rule<F>
where
    F: Fn(usize, &[TokenId], &VisibilityMask) -> Prediction,
{
    type Context = ();

    fn context(&self, _src: &[TokenId]) -> Result<()> {
        Ok(())
    }

    fn length_log_probs(&self, _ctx: &()) -> Result<Vec<f64>> {
        Ok(self.lengths.clone())
    }

    fn predict(&self, _ctx: &(), requests: &[Request<'_>]) -> Result<Vec<Vec<Prediction>>> {
        Ok(requests
            .iter()
            .map(|r| (0..r.tokens.len()).map(|n| (self.rule)(n, r.tokens, r.mask)).collect())
            .collect())
    }
}

fn pred(token: TokenId, prob: f64) -> Prediction {
    Prediction { token, prob }
}

const HONG: TokenId = 5;
const KONG: TokenId = 6;
const NEW: TokenId = 7;
const YORK: TokenId = 8;

/// Two-mode city model: each position copies the mode of the other when it
/// can see it, and otherwise leans (barely) toward a different mode.
/// Other lengths get a fixed filler.
fn cities() -> Rule<impl Fn(usize, &[TokenId], &VisibilityMask) -> Prediction> {
    Rule {
        lengths: vec![-3.0, -0.1, -3.0],
        rule: |n: usize, toks: &[TokenId], mask: &VisibilityMask| {
            if toks.len() != 2 {
                return pred(9 + n as TokenId, 0.6);
            }
            let other = 1 - n;
            if mask.observes(n, other) {
                match (n, toks[other]) {
                    (0, KONG) => return pred(HONG, 0.9),
                    (0, YORK) => return pred(NEW, 0.9),
                    (1, HONG) => return pred(KONG, 0.9),
                    (1, NEW) => return pred(YORK, 0.9),
                    _ => {}
                }
            }
            if n == 0 { pred(HONG, 0.51) } else { pred(YORK, 0.51) }
        },
    }
}

#[test]
fn schedule_examples() {
    let got: Vec<usize> = (1..=10).map(|t| mask_schedule(10, 10, t)).collect();
    assert_eq!(got, vec![10, 9, 8, 7, 6, 5, 4, 3, 2, 1]);
    for n in 1..20 {
        for t_max in 1..12 {
            assert_eq!(mask_schedule(n, t_max, 1), n);
        }
    }
    assert_eq!(mask_schedule(3, 10, 10), 0);
}

#[test]
fn length_beam_examples() {
    let mut lp = vec![-9.0; 12];
    lp[6] = -0.5;
    lp[5] = -1.5;
    lp[7] = -1.6;
    assert_eq!(length_beam(&lp, 1).unwrap(), vec![7]);
    assert_eq!(length_beam(&lp, 3).unwrap(), vec![7, 6, 8]);
    assert_eq!(length_beam(&[-1.0, -1.0, -2.0], 2).unwrap(), vec![1, 2]);
    assert_eq!(length_beam(&lp, 0).unwrap_err().kind(), "validation");
    assert!(length_beam(&lp, 13).is_err());
}

#[test]
fn single_position_converges_at_two() {
    let m = cities();
    let out = refine(&m, &(), &[1], Ordering::EasyFirst, 10, true).unwrap();
    assert_eq!(out.steps, 2);
    assert!(out.converged);
    assert_eq!(out.fixed_point, Some(true));
    let abi = refine(&m, &(), &[1], Ordering::AllButItself, 10, false).unwrap();
    assert_eq!(abi.tokens(), out.tokens());
    assert_eq!(abi.steps, out.steps);
}

#[test]
fn easy_first_settles_on_one_mode() {
    let out = refine(&cities(), &(), &[2], Ordering::EasyFirst, 10, true).unwrap();
    assert_eq!(out.tokens(), &[HONG, KONG]);
    assert_eq!(out.steps, 3);
    assert_eq!(out.fixed_point, Some(true));
}

#[test]
fn all_but_itself_mixes_modes() {
    let out = refine(&cities(), &(), &[2], Ordering::AllButItself, 5, false).unwrap();
    assert!(!out.converged);
    assert_eq!(out.steps, 5);
    let seen: Vec<Vec<TokenId>> = out
        .trace
        .iter()
        .filter_map(|r| match r {
            trace::TraceRecord::Iteration { tokens, .. } => Some(tokens.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(seen[0], vec![HONG, YORK]);
    assert_eq!(seen[1], vec![NEW, KONG]);
    assert_eq!(out.tokens(), &[HONG, YORK]);
    // every iteration uses the cloze mask
    let digest = cloze_mask(2).digest();
    assert!(out.trace.iter().skip(1).all(|r| match r {
        trace::TraceRecord::Iteration { mask, .. } => *mask == digest,
        _ => true,
    }));
}

#[test]
fn easy_first_rows_follow_first_confidences() {
    let confs = [0.9, 0.2, 0.5];
    let m = Rule {
        lengths: vec![0.0],
        rule: move |n: usize, _: &[TokenId], _: &VisibilityMask| pred(5 + n as TokenId, confs[n]),
    };
    let out = refine(&m, &(), &[3], Ordering::EasyFirst, 4, false).unwrap();
    assert_eq!(out.hypothesis().ranks.as_deref(), Some(&[1, 3, 2][..]));
    let expect = from_order_mask(&[1, 3, 2]).unwrap();
    assert_eq!(expect.observed_positions(0), Vec::<usize>::new());
    assert_eq!(expect.observed_positions(1), vec![0, 2]);
    assert_eq!(expect.observed_positions(2), vec![0]);
    match &out.trace[1] {
        trace::TraceRecord::Iteration { t: 2, mask, .. } => assert_eq!(*mask, expect.digest()),
        other => panic!("unexpected {other:?}"),
    }
    let r2l = refine(&m, &(), &[3], Ordering::RightToLeft, 4, false).unwrap();
    assert_eq!(r2l.hypothesis().ranks.as_deref(), Some(&[3, 2, 1][..]));
}

#[test]
fn one_iteration_decoders_agree() {
    let m = cities();
    let a = refine(&m, &(), &[2, 1, 3], Ordering::LeftToRight, 1, false).unwrap();
    let b = mask_predict(&m, &(), &[2, 1, 3], 1, false).unwrap();
    let c = refine(&m, &(), &[2, 1, 3], Ordering::EasyFirst, 1, false).unwrap();
    for k in 0..3 {
        assert_eq!(a.beams[k].tokens, b.beams[k].tokens);
        assert_eq!(a.beams[k].confidences, b.beams[k].confidences);
        assert_eq!(a.beams[k].tokens, c.beams[k].tokens);
    }
    assert_eq!((a.steps, b.steps, c.steps), (1, 1, 1));
}

#[test]
fn certain_model_is_constant_under_mask_predict() {
    let m = Rule {
        lengths: vec![0.0],
        rule: |n: usize, _: &[TokenId], _: &VisibilityMask| pred(10 + n as TokenId, 1.0),
    };
    let out = mask_predict(&m, &(), &[4], 4, false).unwrap();
    assert_eq!(out.steps, 4);
    assert_eq!(out.tokens(), &[10, 11, 12, 13]);
    let mut tokens = out.trace.iter().filter_map(|r| match r {
        trace::TraceRecord::Iteration { tokens, .. } => Some(tokens.clone()),
        _ => None,
    });
    let first = tokens.next().unwrap();
    assert!(tokens.all(|t| t == first));
}

#[test]
fn mask_predict_early_stop_is_optional() {
    let m = cities();
    assert_eq!(mask_predict(&m, &(), &[3], 10, false).unwrap().steps, 10);
    // N=3, T=10: i_8 = floor(3*3/10) = 0
    let early = mask_predict(&m, &(), &[3], 10, true).unwrap();
    let first_zero = (1..=10).find(|&t| mask_schedule(3, 10, t) == 0).unwrap();
    assert_eq!(first_zero, 8);
    assert_eq!(early.steps, 7);
}

#[test]
fn trace_round_trip_and_recount() {
    let m = cities();
    let mut buf = Vec::new();
    let a = refine(&m, &(), &[2, 1], Ordering::EasyFirst, 10, false).unwrap();
    let b = mask_predict(&m, &(), &[2, 3], 6, false).unwrap();
    write_trace(&mut buf, 0, &a.trace).unwrap();
    write_trace(&mut buf, 1, &b.trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let parsed = parse_trace(&text).unwrap();
    assert_eq!(parsed.len(), a.trace.len() + b.trace.len());
    let counts = recount_steps(&parsed).unwrap();
    assert_eq!(counts[&0], a.steps);
    assert_eq!(counts[&1], b.steps);
    assert!(parse_trace("{\"v\":1}").is_err());
    assert!(parse_trace("not json").is_err());
}
