//! Synthetic micro-ABSA tasks from a fixed template grammar.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{opinions, TokenId, Vocabulary, ASPECTS, CUES, FILLER, PUNCT, TAGS};
use crate::data::{GoldPayload, GoldRecord, Task};
use crate::triplet::{SentimentLabel, Triplet, TripletSet};

#[derive(Debug, Clone, PartialEq)]
pub struct MicroTask {
    pub input_id: String,
    /// `the <aspect> is|was <opinion>`
    pub prompt: Vec<TokenId>,
    pub gold: GoldRecord,
}

impl MicroTask {
    pub fn task(&self) -> Task {
        self.gold.task()
    }

    pub fn gold_label(&self) -> SentimentLabel {
        match &self.gold.payload {
            GoldPayload::Absc { label, .. } => *label,
            GoldPayload::Aoste { triplets } => triplets.0[0].polarity(),
        }
    }

    /// Token layout of a well-formed response. Open slots list their
    /// candidates without preference, so the skeleton never carries the
    /// answer. For ABSC the label slot also admits the opinion words; for
    /// AOSTE the aspect slot admits every aspect word and the opinion is
    /// copied from the prompt. Every wrong AOSTE candidate still parses as a
    /// full triplet, so wrong answers of either kind earn equal reward.
    pub fn skeleton(&self, vocab: &Vocabulary) -> Vec<Slot> {
        let id = |s: &str| vocab.id(s).expect("skeleton symbols are in the vocabulary");
        let fixed = |s: &str| Slot::Fixed(id(s));
        let labels: Vec<TokenId> = SentimentLabel::ALL.iter().map(|l| id(l.as_str())).collect();
        // the reasoning slots admit cues and filler alike; which ones are cues is learned
        let words = Slot::Open(CUES.iter().chain(&FILLER).map(|w| id(w)).collect());
        let mut out = vec![fixed(TAGS[0]), words.clone(), words, fixed(TAGS[1]), fixed(TAGS[2])];
        match self.task() {
            Task::Absc => {
                let mut sentiment = labels;
                sentiment.extend(SentimentLabel::ALL.iter().flat_map(|&l| opinions(l).into_iter().take(2)).map(id));
                out.push(Slot::Open(sentiment));
            }
            Task::Aoste => {
                // the prompt aspect and the two that follow it
                let at = ASPECTS.iter().position(|a| id(a) == self.prompt[1]).expect("prompt aspect is an aspect word");
                let aspect = Slot::Open((0..3).map(|k| id(ASPECTS[(at + k) % ASPECTS.len()])).collect());
                // prompt layout is fixed: the <aspect> <verb> <opinion>
                let opinion = Slot::Fixed(self.prompt[3]);
                out.extend([fixed(PUNCT[0]), aspect, fixed(PUNCT[1]), opinion, fixed(PUNCT[1]), Slot::Open(labels), fixed(PUNCT[2])]);
            }
        }
        out.push(fixed(TAGS[3]));
        out.push(Slot::Fixed(vocab.eos()));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Fixed(TokenId),
    Open(Vec<TokenId>),
}

impl Slot {
    pub fn candidates(&self) -> &[TokenId] {
        match self {
            Slot::Fixed(t) => std::slice::from_ref(t),
            Slot::Open(ts) => ts,
        }
    }
}

/// Deterministic in `seed`. Polarity cycles with period 3 and task kind
/// with period 2, so any six consecutive tasks cover every combination.
pub fn make_tasks(seed: u64, count: usize, vocab: &Vocabulary) -> Vec<MicroTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let polarity = SentimentLabel::ALL[i % 3];
            let aspect = *ASPECTS.choose(&mut rng).expect("aspects non-empty");
            let opinion = *opinions(polarity).choose(&mut rng).expect("opinions non-empty");
            let verb = if i % 4 < 2 { "is" } else { "was" };
            let prompt = vocab.encode(&["the", aspect, verb, opinion]).expect("template tokens are in the vocabulary");
            let text = vocab.render(&prompt);
            let input_id = format!("toy-{i:03}");
            let gold = if i % 2 == 0 {
                GoldRecord::absc(input_id.clone(), text, aspect, polarity)
            } else {
                let t = Triplet::new(aspect, opinion, polarity).expect("template terms are non-empty");
                GoldRecord::aoste(input_id.clone(), text, TripletSet::new(vec![t]))
            };
            MicroTask { input_id, prompt, gold }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let v = Vocabulary::default();
        assert_eq!(make_tasks(7, 4, &v), make_tasks(7, 4, &v));
        assert_ne!(make_tasks(7, 12, &v), make_tasks(8, 12, &v));
    }

    #[test]
    fn coverage() {
        let v = Vocabulary::default();
        let tasks = make_tasks(1, 3, &v);
        for label in SentimentLabel::ALL {
            assert!(tasks.iter().any(|t| match &t.gold.payload {
                GoldPayload::Absc { label: l, .. } => *l == label,
                GoldPayload::Aoste { triplets } => triplets.0[0].polarity() == label,
            }));
        }
        assert!(tasks.iter().any(|t| t.task() == Task::Absc));
        assert!(tasks.iter().any(|t| t.task() == Task::Aoste));
    }

    #[test]
    fn gold_terms_appear_in_prompt() {
        let v = Vocabulary::default();
        for t in make_tasks(3, 24, &v) {
            let words: Vec<&str> = t.prompt.iter().map(|&id| v.symbol(id)).collect();
            match &t.gold.payload {
                GoldPayload::Absc { aspect, .. } => assert!(words.contains(&aspect.as_str())),
                GoldPayload::Aoste { triplets } => {
                    assert!(words.contains(&triplets.0[0].aspect()));
                    assert!(words.contains(&triplets.0[0].opinion()));
                }
            }
            assert_eq!(t.gold.text, v.render(&t.prompt));
        }
    }

    #[test]
    fn skeleton_with_gold_label_is_correct() {
        let v = Vocabulary::default();
        let scorer = crate::reward::Scorer::default();
        for t in make_tasks(5, 6, &v) {
            let sk = t.skeleton(&v);
            let label = v.id(t.gold_label().as_str()).unwrap();
            let aspect = t.prompt[1];
            let tokens: Vec<TokenId> = sk
                .iter()
                .map(|c| match c {
                    Slot::Fixed(tok) => *tok,
                    Slot::Open(cands) if cands.contains(&label) => label,
                    Slot::Open(cands) if cands.contains(&aspect) => aspect,
                    Slot::Open(cands) => cands[0],
                })
                .collect();
            let open = sk.iter().filter(|c| matches!(c, Slot::Open(_))).count();
            assert_eq!(open, if t.task() == Task::Absc { 3 } else { 4 });
            let text = v.render(&tokens);
            assert!(scorer.is_correct(&crate::trace::RawGeneration::new(text), &t.gold));
        }
    }
}
