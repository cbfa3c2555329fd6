mod common;

use disco::data::TokenId;
use disco::inference::{mask_predict, refine, Ordering, TraceRecord};

use common::{is_mixed, two_mode_table, HONG, KONG, NEW, YORK};

fn result_tokens(trace: &[TraceRecord]) -> Vec<TokenId> {
    trace
        .iter()
        .find_map(|r| match r {
            TraceRecord::Result { tokens, .. } => Some(tokens.clone()),
            _ => None,
        })
        .expect("trace ends in a result")
}

#[test]
fn easy_first_commits_to_one_mode() {
    let table = two_mode_table();
    let out = refine(&table, &(), &[2], Ordering::EasyFirst, 10, true).unwrap();
    // York is the more confident guess, so position 0 is refined given it.
    assert_eq!(out.tokens(), vec![NEW, YORK]);
    assert!(out.converged && out.fixed_point == Some(true));
    // t=3 reproduces t=2
    assert_eq!(out.steps, 3);
}

#[test]
fn all_but_itself_oscillates_between_mixed_outputs() {
    let table = two_mode_table();
    let out = refine(&table, &(), &[2], Ordering::AllButItself, 10, false).unwrap();
    let mut per_step = Vec::new();
    for r in &out.trace {
        if let TraceRecord::Iteration { tokens, .. } = r {
            per_step.push(tokens.clone());
        }
    }
    // t=1 guesses Hong York, which then flips to New Kong and back.
    assert_eq!(per_step[0], vec![HONG, YORK]);
    assert_eq!(per_step[1], vec![NEW, KONG]);
    assert_eq!(out.steps, 10);
    assert!(!out.converged);
    assert!(is_mixed(out.tokens()));
}

#[test]
fn left_to_right_takes_as_many_steps_as_it_needs() {
    let table = two_mode_table();
    let out = refine(&table, &(), &[2], Ordering::LeftToRight, 10, false).unwrap();
    assert_eq!(out.tokens(), vec![HONG, KONG]);
    assert_eq!(result_tokens(&out.trace), vec![HONG, KONG]);
}

#[test]
fn mask_predict_runs_the_full_budget_without_early_stop() {
    let mut table = common::TableModel::new(vec![-0.1, -3.0]);
    table.set(1, 0, &[], HONG, 0.9);
    let out = mask_predict(&table, &(), &[1], 4, false).unwrap();
    assert_eq!(out.steps, 4);
    assert_eq!(out.tokens(), vec![HONG]);
}
