//! Judge prompts and per-aspect trait wording.
//!
//! The factor lists are written for this project from the standard Big Five
//! facet names; the judge prompt leaves them as a free slot.

use npti::corpus::{Aspect, Trait};

pub const PERSONALITY_PROMPT: &str = "Please act as an impartial judge and evaluate the personality trait of {BFI} exhibited in the response provided by an AI assistant to the user question displayed below.\nYour evaluation should consider factors such as {factors} demonstrated in the response.\nBegin your evaluation by providing a short explanation of no more than 30 words. Be as objective as possible. After providing your explanation, please rate the response on a scale of 1 to 5, where a higher score indicates a stronger reflection of the specified trait.\nPlease follow this format for your rating: \"[[rating]]\", for example: \"Rating: [[5]]\".\n[Question]\n{question}\n[The Start of Assistant\u{2019}s Answer]\n{answer}\n[The End of Assistant\u{2019}s Answer]\n";

pub const FLUENCY_PROMPT: &str = "Please act as an impartial judge and evaluate the fluency of the provided answer within a conversation. Focus solely on how smoothly and naturally the thoughts and emotions are conveyed, ignoring aspects like informal language use and the length of the response. Begin with a concise, objective explanation (no more than 30 words), and then assign a rating on a scale of 1 to 5, where a higher score indicates better fluency. Format your rating as follows: \"Rating: [[rating]]\" (e.g., \"Rating: [[5]]\").\n[The Start of the Answer]\n{answer}\n[The End of the Answer]\n";

/// Name the judge is asked to rate for one side of a trait.
pub fn bfi_name(t: Trait, aspect: Aspect) -> &'static str {
    match (t, aspect) {
        (Trait::O, Aspect::Positive) => "openness",
        (Trait::O, Aspect::Negative) => "closedness to experience",
        (Trait::C, Aspect::Positive) => "conscientiousness",
        (Trait::C, Aspect::Negative) => "unconscientiousness",
        (Trait::E, Aspect::Positive) => "extraversion",
        (Trait::E, Aspect::Negative) => "introversion",
        (Trait::A, Aspect::Positive) => "agreeableness",
        (Trait::A, Aspect::Negative) => "disagreeableness",
        (Trait::N, Aspect::Positive) => "neuroticism",
        (Trait::N, Aspect::Negative) => "emotional stability",
    }
}

pub fn factors(t: Trait, aspect: Aspect) -> &'static str {
    match (t, aspect) {
        (Trait::O, Aspect::Positive) => {
            "imagination, artistic interests, emotionality, adventurousness, intellect, and liberalism"
        }
        (Trait::O, Aspect::Negative) => {
            "preference for routine, conventional tastes, practicality, reluctance to try new things, and disinterest in abstract ideas"
        }
        (Trait::C, Aspect::Positive) => {
            "self-efficacy, orderliness, dutifulness, achievement-striving, self-discipline, and cautiousness"
        }
        (Trait::C, Aspect::Negative) => {
            "disorganization, procrastination, carelessness, impulsiveness, and neglect of obligations"
        }
        (Trait::E, Aspect::Positive) => {
            "friendliness, gregariousness, assertiveness, activity level, excitement-seeking, and cheerfulness"
        }
        (Trait::E, Aspect::Negative) => {
            "reserve, preference for solitude, quietness, low need for stimulation, and restraint in social settings"
        }
        (Trait::A, Aspect::Positive) => "trust, morality, altruism, cooperation, modesty, and sympathy",
        (Trait::A, Aspect::Negative) => {
            "suspicion, self-interest, competitiveness, bluntness, arrogance, and lack of sympathy"
        }
        (Trait::N, Aspect::Positive) => {
            "anxiety, anger, depression, self-consciousness, immoderation, and vulnerability"
        }
        (Trait::N, Aspect::Negative) => {
            "calmness, composure, resilience under stress, emotional steadiness, and self-assurance"
        }
    }
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    // Single left-to-right pass so placeholder text inside a value is kept.
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (key, value) in pairs {
            if let Some(tail) = rest.strip_prefix(key) {
                out.push_str(value);
                rest = tail;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

pub fn personality_prompt(t: Trait, aspect: Aspect, question: &str, answer: &str) -> String {
    fill(
        PERSONALITY_PROMPT,
        &[
            ("{BFI}", bfi_name(t, aspect)),
            ("{factors}", factors(t, aspect)),
            ("{question}", question),
            ("{answer}", answer),
        ],
    )
}

pub fn fluency_prompt(answer: &str) -> String {
    fill(FLUENCY_PROMPT, &[("{answer}", answer)])
}
