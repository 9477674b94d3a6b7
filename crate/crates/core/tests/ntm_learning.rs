mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taas_core::ntm::{train_ntm, NeuralTopicModel, NtmConfig};
use taas_core::numeric::{AdamConfig, ParamStore};

#[test]
fn synthetic_clusters_are_recovered() {
    let bows = common::synthetic_bows(300, 20, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new(3);
    let config = NtmConfig {
        vocab_size: 9,
        num_topics: 3,
        latent_dim: 3,
        hidden: 16,
    };
    let ntm = NeuralTopicModel::new(&mut store, "ntm", config, &mut rng).unwrap();
    let before = ntm.loss::<ChaCha8Rng>(&store, &bows, None).unwrap();
    let history = train_ntm(&ntm, &mut store, &bows, 200, 32, &AdamConfig::with_learning_rate(1e-2), &mut rng).unwrap();
    let after = ntm.loss::<ChaCha8Rng>(&store, &bows, None).unwrap();
    let recovery = common::topic_recovery(&ntm.beta(&store));
    println!(
        "before {before:.3} after {after:.3} first epoch {:.3} recovery {recovery:.3}",
        history[0]
    );
    assert!(after < before);
    assert!(after <= 0.7 * before);
    assert!(recovery >= 0.6);
}
