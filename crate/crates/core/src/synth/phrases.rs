//! Word material for generated notes. Cue tables are indexed by class order.

pub const DRUGS: &[&str] = &[
    "lisinopril",
    "metoprolol",
    "insulin glargine",
    "amlodipine",
    "atorvastatin",
    "vitamin d",
    "metformin",
    "warfarin",
    "potassium chloride",
    "heparin",
    "enoxaparin",
    "apixaban",
    "aspirin",
    "clopidogrel",
    "furosemide",
    "insulin lispro",
    "hydrochlorothiazide",
    "spironolactone",
    "losartan",
    "carvedilol",
    "magnesium oxide",
    "digoxin",
    "amiodarone",
    "levothyroxine",
    "prednisone",
    "ferrous sulfate",
    "methylprednisolone",
    "albuterol",
    "ipratropium bromide",
    "omeprazole",
    "pantoprazole",
    "folic acid",
    "ondansetron",
    "acetaminophen",
    "ibuprofen",
    "oxycodone",
    "morphine",
    "piperacillin tazobactam",
    "gabapentin",
    "sertraline",
    "citalopram",
    "trazodone",
    "lorazepam",
    "nitroglycerin patch",
    "haloperidol",
    "quetiapine",
    "vancomycin",
    "ceftriaxone",
    "azithromycin",
    "calcium carbonate",
    "doxycycline",
    "tamsulosin",
    "finasteride",
    "allopurinol",
    "sodium bicarbonate",
    "colchicine",
    "labetalol",
    "hydralazine",
    "diltiazem",
    "glipizide",
    "simvastatin",
    "clonazepam",
    "famotidine",
    "senna",
];

/// Event cues: Disposition sentences are built from the dimension tables, so
/// its entry is empty.
pub const NO_DISPOSITION: &[&str] = &["continues", "remains on", "is maintained on", "tolerating", "takes"];
pub const NO_DISPOSITION_PAIR: &[&str] = &["home regimen includes", "outpatient list shows"];
pub const UNDETERMINED: &[&str] = &["inquired about", "records mention", "questioned regarding", "unsure about prior"];

pub const ACTION: &[&[&str]] = &[
    &["start", "begin", "initiate"],
    &["stop", "discontinue", "cease"],
    &["increase", "uptitrate", "raise"],
    &["decrease", "taper", "lower"],
    &["give a single dose of", "administer one dose of"],
    &["switch the route of", "change the formulation of"],
    &["adjust", "modify"],
];

pub const NEGATION: &[&[&str]] = &[&["did not", "refused to", "declined to"], &["agreed to", "chose to", "planned to"]];

pub const TEMPORALITY: &[&[&str]] = &[
    &["last week", "two days ago", "in march"],
    &["today", "at this visit", "currently"],
    &["next month", "after discharge", "at follow up"],
    &["at some point", "at an unspecified time"],
];

pub const CERTAINTY: &[&[&str]] = &[
    &["confirmed that", "documented that"],
    &["perhaps", "hypothetically"],
    &["if symptoms recur", "should labs worsen"],
    &["uncertain whether", "unverified whether"],
];

pub const ACTOR: &[&[&str]] = &[
    &["the physician", "the attending", "the cardiologist"],
    &["the patient", "the pt"],
    &["someone", "an unnamed party"],
];

pub const DOSES: &[&str] = &["10 mg", "5 mg daily", "20 units", "250 mg twice daily", "1 tablet", "40 mg nightly", ""];

pub const FILLER: &[&str] = &[
    "Vital signs are stable.",
    "Lungs are clear bilaterally.",
    "No acute distress noted.",
    "Labs reviewed with family.",
    "Blood pressure was 128 over 76.",
    "Ambulating without assistance.",
    "Diet advanced as tolerated.",
];

pub const HEADERS: &[&str] = &[
    "HISTORY OF PRESENT ILLNESS:",
    "MEDICATIONS:",
    "HOSPITAL COURSE:",
    "ASSESSMENT:",
    "PLAN:",
];

/// Function words allowed to appear under more than one class.
#[cfg(test)]
pub const SHARED_WORDS: &[&str] = &["the", "to", "of", "at", "that", "whether", "a", "an"];
