export interface WordBoxJson {
  index: number;
  text: string;
  x: number; // box center, px
  y: number;
  w: number;
  h: number;
  page?: number;
}

export interface LayoutJson {
  doc_id: string;
  full_text: string;
  words: WordBoxJson[];
}

export interface GazeSample {
  t: number; // ms since session start
  x: number;
  y: number;
}

export interface Prediction {
  word: number;
  text: string;
  score: number;
}

export interface VocabEntry {
  user_id: string;
  word: string;
  first_seen: string;
  times_flagged: number;
  dismissed: boolean;
}
