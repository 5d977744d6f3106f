use crate::model::{Problem, Submission};

/// Fixed instructions that open every ladder prompt.
pub const PROMPT_PREAMBLE: &str = "\
There can be different levels of feedback for a student who is trying to solve a programming assignment. Below we describe each level.

Level 0:
Just the correct or incorrect verdict for the code.

Level 1:
Giving a test case where the code fails. The test case contains just input, expected output and the code output. No explanations.

Level 2:
A high-level explanation of why the code failed in the test case. No mention of how to modify the code.

Level 3:
A high-level suggestion about the location in the code where you should make the changes.

Level 4:
Suggestion in actual programming language how to change the code to get the correct solution. Just the statements where change is necessary are mentioned. The full solution code is never given.

For the given problem and code, generate feedback for each of these levels. When generating test cases make sure the generated test case falls inside the valid range.
";

/// Appended to the prompt when a response could not be split into levels.
pub const FORMAT_REMINDER: &str =
    "\n\nLabel each level exactly `Level k:` (for k = 0, 1, 2, 3, 4), each label at the start of its own line.";

/// Builds the ladder prompt for one submission. Pure: identical inputs give
/// byte-identical prompts.
pub fn build_prompt(problem: &Problem, submission: &Submission) -> String {
    let mut prompt =
        String::with_capacity(PROMPT_PREAMBLE.len() + problem.statement.len() + submission.code.len() + 32);
    prompt.push_str(PROMPT_PREAMBLE);
    prompt.push_str("\nProblem: ");
    prompt.push_str(&problem.statement);
    prompt.push_str("\nCode:\n");
    prompt.push_str(&submission.code);
    if !submission.code.ends_with('\n') {
        prompt.push('\n');
    }
    prompt
}

/// The prompt used for the single repair attempt.
pub fn with_format_reminder(prompt: &str) -> String {
    format!("{prompt}{FORMAT_REMINDER}")
}
