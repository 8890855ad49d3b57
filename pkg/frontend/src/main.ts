// DOM wiring for the explorer and quiz views. All rules live in the
// explorer/quiz/overlay modules; this file only renders and forwards events.

import { ApiClient, ApiError } from './api.js';
import {
    applyExplainError,
    applyExplainResult,
    beginExplain,
    canRequestExplain,
    createExplorerState,
} from './explorer.js';
import { composeOverlay, decodeBase64Bytes } from './overlay.js';
import {
    answerCurrent,
    createQuizState,
    loadSummary,
    persistItem,
    phaseAccuracy,
    resumeQuiz,
    showsExplanation,
    startQuiz,
} from './quiz.js';
import { decodeRle } from './rle.js';
import { ExplainResponse, ImagePayload, QuizMode } from './types.js';

const api = new ApiClient('');
const explorer = createExplorerState();
const quiz = createQuizState();

const $ = <T extends HTMLElement>(id: string): T => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
};

function setStatus(id: string, message: string | null, isError = false) {
    const el = $(id);
    el.textContent = message ?? '';
    el.classList.toggle('error', isError);
    el.classList.toggle('hidden', !message);
}

function drawImage(canvas: HTMLCanvasElement, image: ImagePayload,
                   pixelMask: Uint8Array | null, scale = 6) {
    const rgb = decodeBase64Bytes(image.rgb_base64);
    const rgba = composeOverlay(rgb, image.width, image.height, pixelMask);
    const off = document.createElement('canvas');
    off.width = image.width;
    off.height = image.height;
    const offCtx = off.getContext('2d')!;
    const imageData = offCtx.createImageData(image.width, image.height);
    imageData.data.set(rgba);
    offCtx.putImageData(imageData, 0, 0);
    canvas.width = image.width * scale;
    canvas.height = image.height * scale;
    const ctx = canvas.getContext('2d')!;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

// ---- explorer -------------------------------------------------------------

async function refreshClasses() {
    explorer.classes = await api.classes();
    const classSel = $<HTMLSelectElement>('explorer-class');
    const counterSel = $<HTMLSelectElement>('explorer-counter');
    classSel.innerHTML = counterSel.innerHTML = '';
    for (const name of explorer.classes) {
        classSel.add(new Option(name, name));
        counterSel.add(new Option(name, name));
    }
    explorer.selectedClass = explorer.classes[0] ?? null;
    explorer.counterClass = explorer.classes[1] ?? null;
    counterSel.selectedIndex = 1;
    await refreshImages();
}

async function refreshImages() {
    if (!explorer.selectedClass) return;
    explorer.images = await api.images(explorer.selectedClass);
    const imageSel = $<HTMLSelectElement>('explorer-image');
    imageSel.innerHTML = '';
    for (const id of explorer.images) imageSel.add(new Option(id, id));
    explorer.selectedImage = explorer.images[0] ?? null;
    await showQueryImage();
}

async function showQueryImage() {
    if (!explorer.selectedImage) return;
    const payload = await api.image(explorer.selectedImage);
    drawImage($<HTMLCanvasElement>('explorer-query'), payload, null);
    $('explorer-query-label').textContent = explorer.selectedImage;
    $('explorer-counterimg-label').textContent = '';
    setStatus('explorer-warning', null);
}

function renderExplanation(response: ExplainResponse,
                           queryImage: ImagePayload, counterImage: ImagePayload) {
    const pixels = queryImage.width * queryImage.height;
    const queryMask = decodeRle(response.query.pixel_mask_rle, pixels);
    const counterMask = decodeRle(response.counter.pixel_mask_rle, pixels);
    drawImage($<HTMLCanvasElement>('explorer-query'), queryImage, queryMask);
    drawImage($<HTMLCanvasElement>('explorer-counter'), counterImage, counterMask);
    const conf = response.confidence;
    $('explorer-query-label').textContent =
        `${queryImage.id} — predicted ${response.predicted_class} ` +
        `(softmax ${conf.softmax.toFixed(2)}, certainty ${conf.certainty.toFixed(2)}, ` +
        `easiness ${conf.easiness.toFixed(2)})`;
    $('explorer-counterimg-label').textContent =
        `${counterImage.id} — counter class ${response.counter_class}`;
    const flags = [...response.query.degenerate_factors,
                   ...response.counter.degenerate_factors];
    setStatus('explorer-warning',
              response.degenerate ? `degenerate factors: ${flags.join(', ')}` : null,
              true);
    $('explorer-areas').textContent =
        `regions cover ${(response.query.area_fraction * 100).toFixed(1)}% / ` +
        `${(response.counter.area_fraction * 100).toFixed(1)}% of the tap grid`;
}

async function runExplain() {
    const check = canRequestExplain(explorer);
    if (!check.ok) {
        setStatus('explorer-status', check.reason ?? 'cannot explain', true);
        return;
    }
    const seq = beginExplain(explorer);
    setStatus('explorer-status', 'explaining…');
    try {
        const response = await api.explain({
            image_id: explorer.selectedImage!,
            counter_class: explorer.counterClass!,
            score_kind: explorer.scoreKind,
            area: explorer.area,
        });
        if (!applyExplainResult(explorer, seq, response)) return;
        const [queryImage, counterImage] = await Promise.all([
            api.image(explorer.selectedImage!),
            api.image(response.counter_image_id),
        ]);
        renderExplanation(response, queryImage, counterImage);
        setStatus('explorer-status', null);
    } catch (err) {
        const message = err instanceof ApiError ? err.message : String(err);
        if (applyExplainError(explorer, seq, message)) {
            setStatus('explorer-status', message, true);
        }
    }
}

// ---- quiz -------------------------------------------------------------------

function currentQuizMode(): QuizMode {
    const select = $<HTMLSelectElement>('quiz-mode');
    return select.value as QuizMode;
}

async function renderQuizItem() {
    const item = quiz.item;
    $('quiz-phase').textContent = quiz.phase
        ? `phase: ${quiz.phase}${item ? ` — item ${item.index + 1}/${item.total}` : ''}`
        : '';
    const choices = $('quiz-choices');
    choices.innerHTML = '';
    $('quiz-feedback').innerHTML = '';
    if (!item) {
        if (quiz.phase === 'done') await renderQuizSummary();
        return;
    }
    drawImage($<HTMLCanvasElement>('quiz-image'), item.image, null, 7);
    for (const choice of item.choices) {
        const button = document.createElement('button');
        button.textContent = choice === 'dont_know' ? "don't know" : choice;
        button.onclick = () => submitQuizAnswer(choice);
        choices.appendChild(button);
    }
}

async function submitQuizAnswer(choice: string) {
    const learnImageId = quiz.item?.image.id;   // the answered (query) image
    try {
        const resp = await answerCurrent(quiz, api, choice);
        persistItem(quiz, window.localStorage);
        if (resp.explanation && showsExplanation('learn') && learnImageId) {
            await renderLearningFeedback(resp.correct === true, resp.true_class!,
                                         learnImageId, resp.explanation);
        }
        await renderQuizItem();
    } catch (err) {
        setStatus('quiz-status', err instanceof Error ? err.message : String(err), true);
    }
}

async function renderLearningFeedback(correct: boolean, trueClass: string,
                                      queryImageId: string,
                                      explanation: ExplainResponse) {
    const box = $('quiz-feedback');
    box.innerHTML = '';
    const note = document.createElement('p');
    note.textContent = (correct ? 'correct — ' : `not quite: this is ${trueClass} — `)
        + `highlighted regions tell ${explanation.explained_class} from `
        + `${explanation.counter_class}`;
    box.appendChild(note);
    const row = document.createElement('div');
    row.className = 'pair';
    const [queryImage, counterImage] = await Promise.all([
        api.image(queryImageId),
        api.image(explanation.counter_image_id),
    ]);
    for (const [image, side] of [[queryImage, explanation.query],
                                 [counterImage, explanation.counter]] as const) {
        const canvas = document.createElement('canvas');
        const mask = decodeRle(side.pixel_mask_rle, image.width * image.height);
        drawImage(canvas, image, mask, 5);
        row.appendChild(canvas);
    }
    box.appendChild(row);
}

async function renderQuizSummary() {
    const summary = await loadSummary(quiz, api);
    $('quiz-feedback').innerHTML = '';
    $('quiz-phase').textContent = 'phase: done';
    $('quiz-summary').textContent =
        `pre-test ${summary.pre.correct}/20 (${(phaseAccuracy(summary, 'pre') * 100).toFixed(0)}%) — ` +
        `post-test ${summary.post.correct}/20 (${(phaseAccuracy(summary, 'post') * 100).toFixed(0)}%)`;
}

async function beginQuiz() {
    try {
        await startQuiz(quiz, api, currentQuizMode(), window.localStorage);
        setStatus('quiz-status', null);
        $('quiz-summary').textContent = '';
        await renderQuizItem();
    } catch (err) {
        setStatus('quiz-status', err instanceof ApiError ? err.message : String(err), true);
    }
}

// ---- boot ---------------------------------------------------------------------

function wire() {
    $<HTMLSelectElement>('explorer-class').onchange = (e) => {
        explorer.selectedClass = (e.target as HTMLSelectElement).value;
        void refreshImages();
    };
    $<HTMLSelectElement>('explorer-image').onchange = (e) => {
        explorer.selectedImage = (e.target as HTMLSelectElement).value;
        void showQueryImage();
    };
    $<HTMLSelectElement>('explorer-counter').onchange = (e) => {
        explorer.counterClass = (e.target as HTMLSelectElement).value;
    };
    $<HTMLSelectElement>('explorer-score').onchange = (e) => {
        explorer.scoreKind = (e.target as HTMLSelectElement).value;
    };
    $<HTMLInputElement>('explorer-area').oninput = (e) => {
        const cells = Number((e.target as HTMLInputElement).value);
        explorer.area = cells / 64;
        $('explorer-area-label').textContent = `${cells}/64 cells`;
    };
    $('explorer-run').onclick = () => void runExplain();
    $('quiz-start').onclick = () => void beginQuiz();
}

async function boot() {
    wire();
    try {
        await refreshClasses();
    } catch (err) {
        setStatus('explorer-status',
                  err instanceof ApiError ? err.message : String(err), true);
    }
    const resumed = await resumeQuiz(quiz, api, window.localStorage);
    if (resumed) {
        setStatus('quiz-status', `resumed ${quiz.phase} phase from saved session`);
        await renderQuizItem();
    }
}

document.addEventListener('DOMContentLoaded', () => void boot());
