//! Reference values reported for earlier systems and for the five
//! architectures, rendered next to new results for comparison. These are constants and are never recomputed.

/// English: test accuracy (regular, irregular) and Spearman's ρ of
/// production probability and rating with humans (regular, irregular).
pub struct EnglishRow {
    pub system: &'static str,
    pub test_acc: [Option<f64>; 2],
    pub prod_prob_rho: [Option<f64>; 2],
    pub rating_rho: [Option<f64>; 2],
}

pub const ENGLISH: [EnglishRow; 3] = [
    EnglishRow {
        system: "minimal generalization learner",
        test_acc: [Some(99.7), Some(38.0)],
        prod_prob_rho: [Some(0.33), Some(0.30)],
        rating_rho: [Some(0.50), Some(0.49)],
    },
    EnglishRow {
        system: "encoder-decoder LSTM",
        test_acc: [Some(98.9), Some(28.6)],
        prod_prob_rho: [Some(0.48), Some(0.45)],
        rating_rho: [None, None],
    },
    EnglishRow {
        system: "aggregated encoder-decoder LSTM",
        test_acc: [None, None],
        prod_prob_rho: [Some(0.45), Some(0.19)],
        rating_rho: [Some(0.43), Some(0.31)],
    },
];

/// German: dev accuracy, test F1 per class in the order
/// /-(e)n/, /-e/, /-∅/, /-er/, /-s/, other.
pub struct GermanF1Row {
    pub system: &'static str,
    pub dev_acc: f64,
    pub f1: [f64; 6],
}

pub const GERMAN_F1: GermanF1Row = GermanF1Row {
    system: "German encoder-decoder LSTM",
    dev_acc: 92.10,
    f1: [95.00, 87.00, 92.00, 84.00, 60.00, 42.00],
};

/// German: ρ of production probability with humans per class in the order
/// /-(e)n/, /-e/, /-∅/, /-er/, /-s/, then the macro average.
pub const GERMAN_PROD_PROB_RHO: (&str, [Option<f64>; 6]) = (
    "German encoder-decoder LSTM",
    [Some(0.28), Some(0.13), None, Some(0.05), Some(0.33), Some(0.20)],
);

/// Accuracy-vs-rating-correlation Pearson's r over all 35 cells.
pub const ACC_CORR_POOLED: f64 = -0.17;

/// Accuracy-vs-rating-correlation r within each class (over 5 models), in
/// the order reg, irreg, /-(e)n/, /-e/, /-∅/, /-er/, /-s/.
pub const ACC_CORR_PER_CLASS: [f64; 7] = [0.44, -0.31, 0.01, 0.80, 0.73, 0.70, 0.83];

/// Accuracy-vs-rating-correlation r within each model (over 7 cells), in the
/// order BiLSTMAttn, BiLSTMNoAttn, UniLSTMAttn, UniLSTMNoAttn, Transformer.
pub const ACC_CORR_PER_MODEL: [f64; 5] = [-0.57, -0.33, -0.37, -0.39, -0.38];

/// Parameter counts in millions, same model order as above.
pub const PARAM_COUNTS_M: [f64; 5] = [0.93, 0.90, 0.56, 0.54, 7.41];
