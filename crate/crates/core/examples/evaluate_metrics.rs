//! Scores hand-written predictions against gold responses and shows how
//! the action gate and the TF-IDF threshold decide each step.
//!
//! ```text
//! cargo run --example evaluate_metrics
//! ```

use fedsim::data::{ActionType, Category, Episode, Step};
use fedsim::eval::{build_idf, evaluate_predictions, tfidf_similarity, DEFAULT_THRESHOLD};

fn episode(id: &str, app: &str, category: Category, actions: &[(ActionType, &str)]) -> Episode {
    Episode {
        episode_id: id.into(),
        instruction: format!("do something in {app}"),
        app: app.into(),
        category,
        steps: actions
            .iter()
            .enumerate()
            .map(|(i, (a, args))| Step {
                index: i,
                subgoal: String::new(),
                action_type: *a,
                action_args: args.to_string(),
            })
            .collect(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use ActionType::*;
    let test = vec![
        episode("shop", "Amazon", Category::Shopping, &[(OpenApp, "Amazon"), (Type, "usb cable"), (Click, "first result")]),
        episode("mail", "Gmail", Category::Office, &[(OpenApp, "Gmail"), (NavigateBack, "")]),
    ];
    let golds: Vec<String> = vec![
        "open_app Amazon".into(),
        "type usb cable".into(),
        "click first result".into(),
        "open_app Gmail".into(),
        "navigate_back".into(),
    ];
    let preds: Vec<String> = vec![
        "open_app Amazon".into(),
        "type usb charger cable".into(),
        "scroll first result".into(),
        "open_app Gmail".into(),
        "navigate_home".into(),
    ];

    let idf = build_idf(&golds)?;
    for (p, g) in preds.iter().zip(&golds) {
        println!("{:<24} vs {:<20} similarity {:.3}", p, g, tfidf_similarity(p, g, &idf));
    }

    let report = evaluate_predictions(&test, &preds, &golds, DEFAULT_THRESHOLD)?;
    println!();
    for s in &report.steps {
        println!("{}[{}] correct={}", s.episode_id, s.step_index, s.correct);
    }
    println!(
        "\nstep accuracy {:.2}, episode accuracy {:.2}",
        report.step_accuracy, report.episode_accuracy
    );
    for (app, g) in &report.by_app {
        println!("  {app:<7} {}/{} steps", g.n_correct, g.n_steps);
    }
    Ok(())
}
