//! Train a checkworthiness classifier on a small labeled corpus, report test
//! accuracy, and score every claim.

use claimtriage::classifier::{self, LogisticModel, TrainConfig};
use claimtriage::store::split_corpus;
use claimtriage::{Claim, ClaimStore, FacetKey};

fn corpus() -> ClaimStore {
    let checkable = [
        "The county reported 412 new cases on Monday.",
        "Unemployment rose to 6 percent in March.",
        "The city reported rent up 18 percent in two years.",
        "The state spent 2 million dollars on the parade.",
        "Overdose deaths rose 30 percent since 2015.",
        "The school board reported 40 jobs cut in May.",
        "Wait times rose to 5 hours, the clinic reported.",
        "The factory cut 300 jobs in 2021.",
        "Turnout rose to 64 percent in the county.",
        "The state reported 9 percent fewer arrests.",
        "Gas prices rose 40 cents in one week.",
        "The city spent 12 million dollars on roads.",
    ];
    let opinions = [
        "I think the mayor is a terrible leader.",
        "I love how the park looks in autumn.",
        "I think this government never listens.",
        "Honestly the debate was boring.",
        "I think everyone should read more.",
        "The new logo is ugly, honestly.",
        "I think life was better back then.",
        "That speech made me feel hopeful.",
        "Honestly people are too negative online.",
        "I love this town and its people.",
        "The concert was amazing, I think.",
        "Honestly I feel the show is overrated.",
    ];
    let claims = checkable
        .iter()
        .map(|t| (t, 1))
        .chain(opinions.iter().map(|t| (t, 0)))
        .enumerate()
        .map(|(i, (t, y))| Claim::new(format!("c{i:02}"), *t).with_label("verifiable", y));
    ClaimStore::from_claims(claims).expect("unique ids")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = corpus();
    let split = split_corpus(&store, (2, 1), 3)?;
    let model = classifier::train(&FacetKey::verifiable(), &store, &split, &TrainConfig::default())?;
    let report = model.train_report();
    println!(
        "trained on {}+/{}- (balanced to {}/{}), {} iterations, loss {:.4}",
        report.train_positives,
        report.train_negatives,
        report.balanced_positives,
        report.balanced_negatives,
        report.iterations,
        report.final_loss
    );
    if let Some(acc) = report.test_accuracy {
        println!("test accuracy on {} claims: {acc:.2}", report.test_size);
    }

    // Models round-trip through JSON.
    let reloaded = LogisticModel::from_json(&model.to_json()?, None)?;
    for claim in [
        Claim::new("n1", "Inflation hit 9 percent last summer."),
        Claim::new("n2", "What a lovely evening."),
    ] {
        println!("{:.3}  {}", reloaded.predict_proba(&claim), claim.text);
    }
    Ok(())
}
