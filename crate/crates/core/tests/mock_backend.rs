use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textcycle::gateway::{hash_embedding, Backend, MockBackend, SampleRequest, MOCK_EMBED_DIM};
use textcycle::metrics::cosine_similarity;

fn word(rng: &mut ChaCha8Rng, prefix: char) -> String {
    let len = rng.random_range(3..9);
    std::iter::once(prefix).chain((0..len).map(|_| rng.random_range(b'a'..=b'z') as char)).collect()
}

/// Collisions in a 64-bucket hash make this a statistical property; 10-word
/// texts with disjoint vocabularies clear |cos| < 0.3 in about 97% of pairs.
#[test]
fn disjoint_vocabularies_are_nearly_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(412);
    let trials = 2000;
    let mut below = 0;
    for _ in 0..trials {
        let a: Vec<String> = (0..10).map(|_| word(&mut rng, 'p')).collect();
        let b: Vec<String> = (0..10).map(|_| word(&mut rng, 'q')).collect();
        let c = cosine_similarity(&hash_embedding(&a.join(" ")), &hash_embedding(&b.join(" "))).unwrap();
        if c.abs() < 0.3 {
            below += 1;
        }
    }
    let frac = below as f64 / trials as f64;
    println!("|cos| < 0.3 for {below}/{trials} disjoint pairs");
    assert!(frac >= 0.95, "{frac}");
}

#[test]
fn embeddings_have_fixed_dimension_and_identity() {
    let mock = MockBackend::default();
    let v = mock.embed("m", &["same words here".into(), "same words here".into(), "".into()]).unwrap();
    assert!(v.iter().all(|x| x.len() == MOCK_EMBED_DIM));
    assert_eq!(v[0], v[1]);
    assert!((cosine_similarity(&v[0], &v[1]).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn sampling_is_a_pure_function_of_the_request() {
    let mock = MockBackend::default();
    let src = mock.table().texts().next().unwrap().to_string();
    let prompt = format!("Please paraphrase the following text: {src}");
    let req = SampleRequest {
        model: "m",
        prompt: &prompt,
        n: 4,
        temperature: 0.6,
        top_p: 0.9,
    };
    let a = mock.chat_sample(&req).unwrap();
    assert_eq!(a, mock.chat_sample(&req).unwrap());
    assert_eq!(a[0].text, mock.table().pair(&src).unwrap());
    assert_eq!(a.len(), 4);
}
