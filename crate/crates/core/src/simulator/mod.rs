//! Dialog simulation for the five restaurant-booking tasks and the
//! rule-based bot that drives (and can replay) the bot side.

mod dataset;
mod generate;
mod oracle;
mod patterns;

pub use dataset::{
    corpus_stats, gen_dataset, split_file_name, split_seed, CorpusStats, Split, SplitName, SplitSizes, TaskData, TASKS,
};
pub use generate::{
    gen_task, gen_task1, gen_task2, gen_task3, gen_task4, gen_task5, Generated, Request, ACCEPT_PROB,
    TASK5_UPDATE_PROB,
};
pub use oracle::{oracle_bot, OracleBot};
pub use patterns::{BotAct, BotIntent, Field, PatternSet, Slot, Template, UserAct, UserIntent, DEFAULT_PATTERNS};
